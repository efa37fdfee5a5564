#pragma once

#include <cstdint>
#include <string>

#include "conure/data.hpp"

namespace conure {

// Clustered-preference generator. Each user follows one latent cluster; T1
// is a ring walk over the cluster's items with escape noise, T2's label is
// the cluster, and T3's label agrees with T2's with probability rho.
struct SyntheticSpec {
  int users = 200;
  int vocab = 60;
  int clusters = 6;
  int window = 20;
  int history = 40;        // walk length before windowing
  double next_prob = 0.85; // chance the walk follows the ring
  double rho = 0.9;        // T2/T3 label agreement
  std::uint64_t seed = 1;
};

TaskBundle generate_synthetic_tasks(const SyntheticSpec& spec);

// Same latent structure serialized as a ratings log (user::item::rating::ts)
// for the ingest path: walk items rated 1..3, one 5-star cluster
// representative, one 4-star alternate.
void write_synthetic_ratings(const SyntheticSpec& spec, const std::string& path);

}  // namespace conure
