#include "lk/trajlib.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace lk {

Vec FeatureVec::as_vec() const {
  Vec v(6);
  v << y, psi, r, psia, vy, rd;
  return v;
}

FeatureVec FeatureVec::from_vec(const Vec& v) {
  if (v.size() != 6) throw LibError("FeatureVec: expected 6 entries");
  FeatureVec f;
  f.y = v(0);
  f.psi = v(1);
  f.r = v(2);
  f.psia = v(3);
  f.vy = v(4);
  f.rd = v(5);
  return f;
}

double horizon_T(HorizonTag tag) { return tag == HorizonTag::S1 ? 1.0 : 3.0; }
int horizon_N(HorizonTag tag) { return tag == HorizonTag::S1 ? 20 : 30; }

Vec8 lift_state(const FeatureVec& f, const InsertionMap& gamma) {
  Vec8 x = Vec8::Zero();
  x(0) = f.y;
  x(1) = f.vy;
  x(2) = f.psi;
  x(3) = f.r;
  x(4) = f.psia;
  const Vec x2 = gamma.map(gamma.x1(x));
  x(5) = x2(0);
  x(6) = x2(1);
  x(7) = x2(2);
  return x;
}

std::vector<FeatureVec> grid_plan(const Vec& lo, const Vec& hi,
                                  const std::array<int, 6>& counts) {
  if (lo.size() != 6 || hi.size() != 6)
    throw LibError("grid_plan: ranges must have 6 entries");
  std::int64_t total = 1;
  for (int d = 0; d < 6; ++d) {
    if (counts[d] < 1) throw LibError("grid_plan: counts must be >= 1");
    if (hi(d) < lo(d)) throw LibError("grid_plan: empty range");
    total *= counts[d];
  }
  std::vector<FeatureVec> plan;
  plan.reserve(static_cast<std::size_t>(total));
  Vec v(6);
  std::array<int, 6> idx = {0, 0, 0, 0, 0, 0};
  for (std::int64_t k = 0; k < total; ++k) {
    for (int d = 0; d < 6; ++d)
      v(d) = counts[d] == 1
                 ? 0.5 * (lo(d) + hi(d))
                 : lo(d) + (hi(d) - lo(d)) * idx[d] / (counts[d] - 1);
    plan.push_back(FeatureVec::from_vec(v));
    for (int d = 5; d >= 0; --d) {  // last feature fastest
      if (++idx[d] < counts[d]) break;
      idx[d] = 0;
    }
  }
  return plan;
}

LibraryFile batch_generate(const std::vector<FeatureVec>& plan,
                           HorizonTag tag, const TrajContext& ctx,
                           const TrajOptSpec& base, bool parallel) {
  const int n = static_cast<int>(plan.size());
  std::vector<TrajRecord> all(n);
  auto solve_one = [&](int i) {
    TrajOptSpec spec = base;
    spec.T = horizon_T(tag);
    spec.N = horizon_N(tag);
    spec.rd = plan[i].rd;
    spec.x0 = lift_state(plan[i], ctx.gamma);
    auto sol = optimize_trajectory(spec, ctx);
    TrajRecord rec;
    rec.f = plan[i];
    rec.tag = tag;
    rec.coeffs = Eigen::Map<const Vec>(sol.h_des.coeffs.data(),
                                       static_cast<int>(sol.h_des.coeffs.size()));
    rec.cost = sol.cost;
    rec.feasible = sol.feasible;
    all[i] = rec;
  };
  if (parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) solve_one(i);
  } else {
    for (int i = 0; i < n; ++i) solve_one(i);
  }

  LibraryFile lib;
  lib.header.tag = tag;
  for (const auto& rec : all) {
    if (rec.feasible) {
      lib.records.push_back(rec);
    } else {
      ++lib.infeasible_count;
      if (lib.infeasible_witnesses.size() < 8)
        lib.infeasible_witnesses.push_back(rec.f);
    }
  }
  lib.header.record_count = static_cast<std::int64_t>(lib.records.size());
  // ranges actually covered by the plan, for the header
  if (!plan.empty()) {
    Vec lo = plan.front().as_vec(), hi = plan.front().as_vec();
    for (const auto& f : plan) {
      lo = lo.cwiseMin(f.as_vec());
      hi = hi.cwiseMax(f.as_vec());
    }
    lib.header.lo = lo;
    lib.header.hi = hi;
  }
  return lib;
}

namespace {

constexpr char kMagic[] = "trajlib-v1";
constexpr std::size_t kRowBytes = 6 * 8 + 1 + 9 * 8 + 8 + 1;

void put_hex(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  os << std::hex << bits << std::dec;
}

double get_hex(std::istream& is) {
  std::uint64_t bits = 0;
  is >> std::hex >> bits >> std::dec;
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

void put_raw(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

}  // namespace

void save_library(const LibraryFile& lib, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw LibError("save_library: cannot open " + path);
  os << kMagic << "\n";
  os << "hash " << std::hex << lib.header.config_hash << std::dec << "\n";
  os << "tag " << static_cast<int>(lib.header.tag) << "\n";
  os << "bezier_order " << lib.header.bezier_order << "\n";
  os << "counts";
  for (int c : lib.header.counts) os << " " << c;
  os << "\nlo";
  for (int d = 0; d < 6; ++d) {
    os << " ";
    put_hex(os, lib.header.lo(d));
  }
  os << "\nhi";
  for (int d = 0; d < 6; ++d) {
    os << " ";
    put_hex(os, lib.header.hi(d));
  }
  os << "\nrecords " << lib.records.size() << "\n";
  os << "data\n";
  for (const auto& rec : lib.records) {
    const Vec f = rec.f.as_vec();
    put_raw(os, f.data(), 6 * 8);
    const auto tag = static_cast<std::uint8_t>(rec.tag);
    put_raw(os, &tag, 1);
    if (rec.coeffs.size() != 9)
      throw LibError("save_library: coefficient row must have 9 entries");
    put_raw(os, rec.coeffs.data(), 9 * 8);
    put_raw(os, &rec.cost, 8);
    const std::uint8_t feas = rec.feasible ? 1 : 0;
    put_raw(os, &feas, 1);
  }
  if (!os) throw LibError("save_library: write failed for " + path);
}

LibraryFile load_library(const std::string& path,
                         std::optional<std::uint64_t> expected_hash) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LibError("load_library: cannot open " + path);
  std::string word;
  is >> word;
  if (word != kMagic) throw LibError("load_library: bad magic in " + path);
  LibraryFile lib;
  std::int64_t n = -1;
  while (is >> word && word != "data") {
    if (word == "hash") {
      is >> std::hex >> lib.header.config_hash >> std::dec;
    } else if (word == "tag") {
      int t;
      is >> t;
      lib.header.tag = static_cast<HorizonTag>(t);
    } else if (word == "bezier_order") {
      is >> lib.header.bezier_order;
    } else if (word == "counts") {
      for (int& c : lib.header.counts) is >> c;
    } else if (word == "lo") {
      for (int d = 0; d < 6; ++d) lib.header.lo(d) = get_hex(is);
    } else if (word == "hi") {
      for (int d = 0; d < 6; ++d) lib.header.hi(d) = get_hex(is);
    } else if (word == "records") {
      is >> n;
    } else {
      throw LibError("load_library: unknown header field '" + word + "'");
    }
  }
  if (word != "data" || n < 0 || !is)
    throw LibError("load_library: malformed header in " + path);
  if (expected_hash && *expected_hash != lib.header.config_hash) {
    std::ostringstream msg;
    msg << "load_library: config hash mismatch in " << path << " (file "
        << std::hex << lib.header.config_hash << ", expected "
        << *expected_hash << ")";
    throw LibError(msg.str());
  }
  lib.header.record_count = n;
  is.get();  // newline after "data"
  lib.records.resize(static_cast<std::size_t>(n));
  std::vector<char> row(kRowBytes);
  for (auto& rec : lib.records) {
    is.read(row.data(), static_cast<std::streamsize>(kRowBytes));
    if (is.gcount() != static_cast<std::streamsize>(kRowBytes))
      throw LibError("load_library: truncated file " + path);
    const char* p = row.data();
    Vec f(6);
    std::memcpy(f.data(), p, 6 * 8);
    p += 6 * 8;
    rec.f = FeatureVec::from_vec(f);
    rec.tag = static_cast<HorizonTag>(static_cast<std::uint8_t>(*p++));
    rec.coeffs.resize(9);
    std::memcpy(rec.coeffs.data(), p, 9 * 8);
    p += 9 * 8;
    std::memcpy(&rec.cost, p, 8);
    p += 8;
    rec.feasible = *p != 0;
  }
  char extra;
  if (is.read(&extra, 1))
    throw LibError("load_library: trailing bytes in " + path);
  return lib;
}

}  // namespace lk
