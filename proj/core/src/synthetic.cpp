#include "conure/synthetic.hpp"

#include <fstream>

#include "conure/errors.hpp"

namespace conure {

namespace {

void validate(const SyntheticSpec& spec) {
  if (spec.rho < 0.0 || spec.rho > 1.0) throw ConfigError("rho must lie in [0, 1]");
  if (spec.clusters < 1 || spec.vocab < spec.clusters) {
    throw ConfigError("need at least one item per cluster");
  }
  if (spec.users < 1 || spec.window < 1 || spec.history < 1) {
    throw ConfigError("users, window, and history must be positive");
  }
  if (spec.next_prob < 0.0 || spec.next_prob > 1.0) {
    throw ConfigError("next_prob must lie in [0, 1]");
  }
}

// Contiguous item ranges; the last cluster absorbs the remainder.
struct Clustering {
  int per = 0;
  int clusters = 0;
  int vocab = 0;

  int first(int c) const { return c * per + 1; }
  int size(int c) const { return c == clusters - 1 ? vocab - per * (clusters - 1) : per; }
};

std::vector<int> ring_walk(const Clustering& cl, int cluster, const SyntheticSpec& spec,
                           Rng& rng) {
  std::vector<int> walk;
  walk.reserve(static_cast<std::size_t>(spec.history));
  const int base = cl.first(cluster);
  const int size = cl.size(cluster);
  int ring = static_cast<int>(rng.below(size));
  for (int step = 0; step < spec.history; ++step) {
    if (rng.uniform01() < spec.next_prob) {
      walk.push_back(base + ring);
      ring = (ring + 1) % size;
    } else {
      walk.push_back(1 + static_cast<int>(rng.below(spec.vocab)));
    }
  }
  return walk;
}

std::vector<int> pad_window(const std::vector<int>& walk, int window) {
  std::vector<int> ids(static_cast<std::size_t>(window), 0);
  const std::size_t take = std::min(walk.size(), static_cast<std::size_t>(window));
  for (std::size_t i = 0; i < take; ++i) {
    ids[ids.size() - take + i] = walk[walk.size() - take + i];
  }
  return ids;
}

}  // namespace

TaskBundle generate_synthetic_tasks(const SyntheticSpec& spec) {
  validate(spec);
  Rng rng(spec.seed);
  const Clustering cl{spec.vocab / spec.clusters, spec.clusters, spec.vocab};

  TaskBundle bundle;
  bundle.window = spec.window;
  for (int i = 1; i <= spec.vocab; ++i) bundle.items.add(i);
  for (int c = 1; c <= spec.clusters; ++c) {
    bundle.t2_labels.add(c);
    bundle.t3_labels.add(c);
  }
  bundle.t1.kind = TaskKind::autoregressive;
  bundle.t1.label_count = spec.vocab;
  bundle.t2.kind = TaskKind::ranking;
  bundle.t2.label_count = spec.clusters;
  bundle.t3.kind = TaskKind::ranking;
  bundle.t3.label_count = spec.clusters;

  for (int u = 1; u <= spec.users; ++u) {
    bundle.users.add(u);
    const int cluster = (u - 1) % spec.clusters;
    std::vector<int> ids = pad_window(ring_walk(cl, cluster, spec, rng), spec.window);
    bundle.windows.emplace(u, ids);
    bundle.t1.sequences.push_back({u, std::move(ids)});
    bundle.t2.instances.push_back({u, cluster + 1});
    const int t3_label = rng.uniform01() < spec.rho
                             ? cluster + 1
                             : 1 + static_cast<int>(rng.below(spec.clusters));
    bundle.t3.instances.push_back({u, t3_label});
  }
  return bundle;
}

void write_synthetic_ratings(const SyntheticSpec& spec, const std::string& path) {
  validate(spec);
  Rng rng(spec.seed);
  const Clustering cl{spec.vocab / spec.clusters, spec.clusters, spec.vocab};
  std::ofstream out(path);
  if (!out) throw DataError("cannot write ratings file '" + path + "'");
  for (int u = 1; u <= spec.users; ++u) {
    const int cluster = (u - 1) % spec.clusters;
    const std::vector<int> walk = ring_walk(cl, cluster, spec, rng);
    long long ts = 0;
    for (int item : walk) {
      out << u << "::" << item << "::" << 1 + rng.below(3) << "::" << ++ts << '\n';
    }
    // preference signal: the cluster representative and an alternate
    out << u << "::" << cl.first(cluster) << "::5::" << ++ts << '\n';
    if (cl.size(cluster) > 1) {
      out << u << "::" << cl.first(cluster) + 1 << "::4::" << ++ts << '\n';
    }
  }
}

}  // namespace conure
