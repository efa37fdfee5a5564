#pragma once

namespace conure {

// Full command-line front end; returns the process exit status.
// Subcommands: ingest, synth, train, prune, retrain, commit, eval, audit,
// demo-forgetting, report, capacity.
int cli_dispatch(int argc, const char* const* argv);

}  // namespace conure
