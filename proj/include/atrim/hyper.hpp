#pragma once

#include "atrim/linalg.hpp"
#include "atrim/model.hpp"

#include <vector>

namespace atrim {

/// One hyperparameter assignment. The modular-network fields follow the
/// 12-way search grid; the baseline fields carry the plain-cell search.
struct HyperDict {
  // Modular network.
  int units = 10;
  int num_rims = 2;    // active modules
  int k_modules = 4;   // total modules
  int input_key_size = 8;
  int input_value_size = 8;
  int input_query_size = 8;
  double input_keep_prob = 0.9;
  int comm_heads = 2;
  int comm_key_size = 8;
  int comm_value_size = 8;
  int comm_query_size = 8;
  double comm_keep_prob = 0.9;

  // Baselines.
  int hidden_units = 20;
  double l1_weight = 1e-4;
  double dropout = 0.1;

  bool operator==(const HyperDict&) const = default;
};

/// The search lists for the modular network.
struct RimGrid {
  std::vector<int> units;
  std::vector<int> num_rims;
  std::vector<int> k_modules;
  std::vector<int> input_key_size;
  std::vector<int> input_value_size;
  std::vector<int> input_query_size;
  std::vector<double> input_keep_prob;
  std::vector<int> comm_heads;
  std::vector<int> comm_key_size;
  std::vector<int> comm_value_size;
  std::vector<int> comm_query_size;
  std::vector<double> comm_keep_prob;
};
const RimGrid& rim_grid();

/// Constraint on a sampled assignment: active module count cannot exceed the
/// total, and the key/query widths of each attention site must agree so the
/// dot space is well formed.
bool satisfies_constraints(const HyperDict& h);

/// Membership of every modular field in its grid list.
bool in_grid(const HyperDict& h);

/// Rejection-sample `n` distinct assignments uniformly from the cartesian
/// grid, discarding constraint violators.
std::vector<HyperDict> sample_hyper_dicts(SeededRng& rng, int n);

/// Baseline candidates: hidden units by L1 weight by dropout rate. The full
/// flag yields units 5..250 step 5 with the complete L1/dropout lists; the
/// reduced grid keeps runs desk-sized.
std::vector<HyperDict> baseline_grid(bool full = false);

/// Apply an assignment to a model configuration of the given kind.
ModelConfig hyper_to_config(const std::string& kind, const HyperDict& h, int lookback,
                            int features, int horizon = 5);

}  // namespace atrim
