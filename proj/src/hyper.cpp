#include "atrim/hyper.hpp"

#include <algorithm>

namespace atrim {

const RimGrid& rim_grid() {
  static const RimGrid grid{
      {2, 4, 6, 8, 10, 12, 14, 16, 18, 20, 25, 30, 35, 40, 45, 50},
      {4, 6, 8, 10, 12, 14},
      {4, 6, 8, 10, 12, 14},
      {4, 6, 8, 10, 12},
      {4, 6, 8, 10, 12},
      {4, 6, 8, 10, 12},
      {0.6, 0.7, 0.8, 0.9},
      {2, 4, 6, 8},
      {4, 6, 8, 10, 12},
      {4, 6, 8, 10, 12},
      {4, 6, 8, 10, 12},
      {0.6, 0.7, 0.8, 0.9},
  };
  return grid;
}

bool satisfies_constraints(const HyperDict& h) {
  return h.num_rims <= h.k_modules && h.input_query_size == h.input_key_size &&
         h.comm_query_size == h.comm_key_size;
}

namespace {

template <typename T>
bool member(const std::vector<T>& list, T v) {
  return std::find(list.begin(), list.end(), v) != list.end();
}

template <typename T>
T pick(const std::vector<T>& list, SeededRng& rng) {
  return list[rng.below(list.size())];
}

}  // namespace

bool in_grid(const HyperDict& h) {
  const RimGrid& g = rim_grid();
  return member(g.units, h.units) && member(g.num_rims, h.num_rims) &&
         member(g.k_modules, h.k_modules) && member(g.input_key_size, h.input_key_size) &&
         member(g.input_value_size, h.input_value_size) &&
         member(g.input_query_size, h.input_query_size) &&
         member(g.input_keep_prob, h.input_keep_prob) && member(g.comm_heads, h.comm_heads) &&
         member(g.comm_key_size, h.comm_key_size) && member(g.comm_value_size, h.comm_value_size) &&
         member(g.comm_query_size, h.comm_query_size) && member(g.comm_keep_prob, h.comm_keep_prob);
}

std::vector<HyperDict> sample_hyper_dicts(SeededRng& rng, int n) {
  if (n < 1) throw std::invalid_argument("sample_hyper_dicts: n must be positive");
  const RimGrid& g = rim_grid();
  std::vector<HyperDict> out;
  out.reserve(n);
  while (static_cast<int>(out.size()) < n) {
    HyperDict h;
    h.units = pick(g.units, rng);
    h.num_rims = pick(g.num_rims, rng);
    h.k_modules = pick(g.k_modules, rng);
    h.input_key_size = pick(g.input_key_size, rng);
    h.input_value_size = pick(g.input_value_size, rng);
    h.input_query_size = pick(g.input_query_size, rng);
    h.input_keep_prob = pick(g.input_keep_prob, rng);
    h.comm_heads = pick(g.comm_heads, rng);
    h.comm_key_size = pick(g.comm_key_size, rng);
    h.comm_value_size = pick(g.comm_value_size, rng);
    h.comm_query_size = pick(g.comm_query_size, rng);
    h.comm_keep_prob = pick(g.comm_keep_prob, rng);
    if (!satisfies_constraints(h)) continue;
    if (std::find(out.begin(), out.end(), h) != out.end()) continue;
    out.push_back(h);
  }
  return out;
}

std::vector<HyperDict> baseline_grid(bool full) {
  std::vector<int> units;
  std::vector<double> l1, dropout;
  if (full) {
    for (int u = 5; u <= 250; u += 5) units.push_back(u);
    l1 = {1e-4, 1e-3, 1e-2, 0.10};
    dropout = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  } else {
    units = {10, 25, 50};
    l1 = {1e-4, 1e-2};
    dropout = {0.1, 0.3};
  }
  std::vector<HyperDict> out;
  out.reserve(units.size() * l1.size() * dropout.size());
  for (int u : units)
    for (double w : l1)
      for (double d : dropout) {
        HyperDict h;
        h.hidden_units = u;
        h.l1_weight = w;
        h.dropout = d;
        out.push_back(h);
      }
  return out;
}

ModelConfig hyper_to_config(const std::string& kind, const HyperDict& h, int lookback,
                            int features, int horizon) {
  ModelConfig cfg;
  cfg.kind = kind;
  cfg.lookback = lookback;
  cfg.features = features;
  cfg.horizon = horizon;
  if (kind == "alpha_t_rim") {
    cfg.rim.units = h.units;
    cfg.rim.num_modules_total = h.k_modules;
    cfg.rim.num_modules_active = h.num_rims;
    cfg.rim.input_key_size = h.input_key_size;
    cfg.rim.input_value_size = h.input_value_size;
    cfg.rim.input_query_size = h.input_query_size;
    cfg.rim.input_keep_prob = h.input_keep_prob;
    cfg.rim.comm_heads = h.comm_heads;
    cfg.rim.comm_key_size = h.comm_key_size;
    cfg.rim.comm_value_size = h.comm_value_size;
    cfg.rim.comm_query_size = h.comm_query_size;
    cfg.rim.comm_keep_prob = h.comm_keep_prob;
  } else {
    cfg.units = h.hidden_units;
    cfg.dropout = h.dropout;
  }
  cfg.validate();
  return cfg;
}

}  // namespace atrim
