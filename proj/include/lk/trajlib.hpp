#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lk/trajopt.hpp"

namespace lk {

struct LibError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Feature vector of Eq. 30 ordering: [y, psi, r, psi_a, v_y, r_d].
struct FeatureVec {
  double y = 0.0;
  double psi = 0.0;
  double r = 0.0;
  double psia = 0.0;
  double vy = 0.0;
  double rd = 0.0;

  Vec as_vec() const;
  static FeatureVec from_vec(const Vec& v);
};

enum class HorizonTag : std::uint8_t { S1 = 1, S2 = 2 };

// Horizon / node count per training set.
double horizon_T(HorizonTag tag);
int horizon_N(HorizonTag tag);

// Feature-to-initial-state lift: the five slow states come straight from
// the feature, the fast states from the insertion map, x2(0) = gamma(x1(0)).
Vec8 lift_state(const FeatureVec& f, const InsertionMap& gamma);

struct TrajRecord {
  FeatureVec f;
  HorizonTag tag = HorizonTag::S2;
  Vec coeffs = Vec::Zero(9);
  double cost = 0.0;
  bool feasible = false;
};

struct LibraryHeader {
  Vec lo = Vec::Zero(6);
  Vec hi = Vec::Zero(6);
  std::array<int, 6> counts = {1, 1, 1, 1, 1, 1};
  int bezier_order = 8;
  HorizonTag tag = HorizonTag::S2;
  std::uint64_t config_hash = 0;
  std::int64_t record_count = 0;
};

struct LibraryFile {
  LibraryHeader header;
  std::vector<TrajRecord> records;
  int infeasible_count = 0;
  std::vector<FeatureVec> infeasible_witnesses;  // up to a handful, for logs
};

// Cartesian grid in deterministic row-major order (last feature fastest).
std::vector<FeatureVec> grid_plan(const Vec& lo, const Vec& hi,
                                  const std::array<int, 6>& counts);

// Runs optimize_trajectory on every plan point and keeps the feasible ones.
// `parallel = false` is the serial reference used by tests and the
// parallel-vs-serial benchmark; both orders produce identical files.
LibraryFile batch_generate(const std::vector<FeatureVec>& plan,
                           HorizonTag tag, const TrajContext& ctx,
                           const TrajOptSpec& base, bool parallel = true);

void save_library(const LibraryFile& lib, const std::string& path);
LibraryFile load_library(const std::string& path,
                         std::optional<std::uint64_t> expected_hash = {});

}  // namespace lk
