#include "lk/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace lk {

void MlpModel::validate() const {
  if (sizes.size() < 2) throw ModelError("mlp: need at least input and output");
  if (W.size() != sizes.size() - 1 || b.size() != W.size())
    throw ModelError("mlp: layer count mismatch");
  for (std::size_t l = 0; l < W.size(); ++l) {
    if (W[l].rows() != sizes[l + 1] || W[l].cols() != sizes[l] ||
        b[l].size() != sizes[l + 1])
      throw ModelError("mlp: shape mismatch at layer " + std::to_string(l));
  }
  if (in_mean.size() != sizes.front() || in_scale.size() != sizes.front() ||
      out_mean.size() != sizes.back() || out_scale.size() != sizes.back())
    throw ModelError("mlp: normalization shape mismatch");
  if (in_scale.minCoeff() <= 0.0)
    throw ModelError("mlp: normalization scale must be positive");
}

Vec MlpModel::forward_std(const Vec& x) const {
  if (x.size() != sizes.front()) throw ModelError("mlp: input size mismatch");
  Vec a = (x - in_mean).cwiseQuotient(in_scale);
  const std::size_t L = W.size();
  for (std::size_t l = 0; l < L; ++l) {
    a = W[l] * a + b[l];
    if (l + 1 < L) a = a.cwiseMax(0.0);
  }
  return a;
}

Vec MlpModel::forward(const Vec& x) const {
  return out_mean + out_scale.cwiseProduct(forward_std(x));
}

MlpModel make_mlp(const std::vector<int>& sizes, unsigned seed) {
  MlpModel m;
  m.sizes = sizes;
  std::mt19937 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    Mat w(sizes[l + 1], sizes[l]);
    const double s = std::sqrt(2.0 / sizes[l]);  // He init for ReLU stacks
    for (int i = 0; i < w.rows(); ++i)
      for (int j = 0; j < w.cols(); ++j) w(i, j) = s * gauss(rng);
    m.W.push_back(w);
    m.b.push_back(Vec::Zero(sizes[l + 1]));
  }
  m.in_mean = Vec::Zero(sizes.front());
  m.in_scale = Vec::Ones(sizes.front());
  m.out_mean = Vec::Zero(sizes.back());
  m.out_scale = Vec::Ones(sizes.back());
  m.validate();
  return m;
}

void TrainConfig::validate() const {
  if (train_fraction <= 0.0 || train_fraction >= 1.0)
    throw ModelError("mlp: train fraction outside (0,1)");
  if (lr <= 0.0 || batch < 1 || epochs < 1 || lr_decay <= 0.0 ||
      lr_decay > 1.0)
    throw ModelError("mlp: bad optimizer settings");
}

namespace {

struct Tape {
  std::vector<Vec> act;  // act[0] = normalized input, act[l+1] post-ReLU
  std::vector<Vec> pre;  // pre-activations per layer
};

Vec forward_tape(const MlpModel& m, const Vec& xn, Tape& tp) {
  const std::size_t L = m.W.size();
  tp.act.assign(L + 1, Vec());
  tp.pre.assign(L, Vec());
  tp.act[0] = xn;
  for (std::size_t l = 0; l < L; ++l) {
    tp.pre[l] = m.W[l] * tp.act[l] + m.b[l];
    tp.act[l + 1] = (l + 1 < L) ? tp.pre[l].cwiseMax(0.0) : tp.pre[l];
  }
  return tp.act[L];
}

// accumulates d(1/2 ||out - t||^2)/d(W,b) into gW, gb; returns the residual
Vec backward(const MlpModel& m, const Tape& tp, const Vec& target,
             std::vector<Mat>& gW, std::vector<Vec>& gb) {
  const std::size_t L = m.W.size();
  const Vec resid = tp.act[L] - target;
  Vec delta = resid;
  for (std::size_t l = L; l-- > 0;) {
    gW[l] += delta * tp.act[l].transpose();
    gb[l] += delta;
    if (l > 0) {
      delta = m.W[l].transpose() * delta;
      for (int i = 0; i < delta.size(); ++i)
        if (tp.pre[l - 1](i) <= 0.0) delta(i) = 0.0;
    }
  }
  return resid;
}

double mse_std(const MlpModel& m, const Mat& X, const Mat& Y,
               const std::vector<int>& idx) {
  if (idx.empty()) return 0.0;
  double s = 0.0;
  for (int i : idx)
    s += (m.forward_std(X.row(i).transpose()) -
          (Y.row(i).transpose() - m.out_mean).cwiseQuotient(m.out_scale).eval())
             .squaredNorm();
  return s / (static_cast<double>(idx.size()) * Y.cols());
}

}  // namespace

TrainResult train_xy(const Mat& X, const Mat& Y, const TrainConfig& cfg) {
  cfg.validate();
  const int n = static_cast<int>(X.rows());
  if (n < 10) throw ModelError("mlp: need >= 10 records to train");
  if (Y.rows() != n) throw ModelError("mlp: feature/target count mismatch");

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937 rng(cfg.seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  const int n_train = std::max(1, static_cast<int>(cfg.train_fraction * n));
  std::vector<int> train_idx(perm.begin(), perm.begin() + n_train);
  std::vector<int> test_idx(perm.begin() + n_train, perm.end());

  std::vector<int> sizes;
  sizes.push_back(static_cast<int>(X.cols()));
  for (int h : cfg.hidden) sizes.push_back(h);
  sizes.push_back(static_cast<int>(Y.cols()));
  MlpModel m = make_mlp(sizes, cfg.seed + 1);

  // standardize on the training split only
  Vec xm = Vec::Zero(X.cols()), xs = Vec::Zero(X.cols());
  Vec ym = Vec::Zero(Y.cols()), ys = Vec::Zero(Y.cols());
  for (int i : train_idx) {
    xm += X.row(i).transpose();
    ym += Y.row(i).transpose();
  }
  xm /= n_train;
  ym /= n_train;
  for (int i : train_idx) {
    xs += (X.row(i).transpose() - xm).cwiseAbs2();
    ys += (Y.row(i).transpose() - ym).cwiseAbs2();
  }
  m.in_mean = xm;
  m.in_scale = (xs / n_train).cwiseSqrt().cwiseMax(1e-9);
  m.out_mean = ym;
  m.out_scale = (ys / n_train).cwiseSqrt().cwiseMax(1e-9);

  // Adam-style moment buffers
  std::vector<Mat> mW, vW, gW;
  std::vector<Vec> mb, vb, gb;
  for (std::size_t l = 0; l < m.W.size(); ++l) {
    mW.push_back(Mat::Zero(m.W[l].rows(), m.W[l].cols()));
    vW.push_back(Mat::Zero(m.W[l].rows(), m.W[l].cols()));
    gW.push_back(Mat::Zero(m.W[l].rows(), m.W[l].cols()));
    mb.push_back(Vec::Zero(m.b[l].size()));
    vb.push_back(Vec::Zero(m.b[l].size()));
    gb.push_back(Vec::Zero(m.b[l].size()));
  }

  TrainResult out;
  Tape tp;
  long step = 0;
  std::vector<int> order = train_idx;
  double lr = cfg.lr;
  for (int ep = 0; ep < cfg.epochs; ++ep) {
    std::shuffle(order.begin(), order.end(), rng);
    double ep_loss = 0.0;
    for (int start = 0; start < n_train; start += cfg.batch) {
      const int bsz = std::min(cfg.batch, n_train - start);
      for (auto& g : gW) g.setZero();
      for (auto& g : gb) g.setZero();
      for (int k = 0; k < bsz; ++k) {
        const int i = order[start + k];
        const Vec xn =
            (X.row(i).transpose() - m.in_mean).cwiseQuotient(m.in_scale);
        const Vec tn =
            (Y.row(i).transpose() - m.out_mean).cwiseQuotient(m.out_scale);
        forward_tape(m, xn, tp);
        ep_loss += backward(m, tp, tn, gW, gb).squaredNorm();
      }
      ++step;
      const double c1 = 1.0 - std::pow(cfg.beta1, step);
      const double c2 = 1.0 - std::pow(cfg.beta2, step);
      for (std::size_t l = 0; l < m.W.size(); ++l) {
        gW[l] /= bsz;
        gb[l] /= bsz;
        mW[l] = cfg.beta1 * mW[l] + (1.0 - cfg.beta1) * gW[l];
        vW[l] = cfg.beta2 * vW[l] + (1.0 - cfg.beta2) * gW[l].cwiseAbs2();
        mb[l] = cfg.beta1 * mb[l] + (1.0 - cfg.beta1) * gb[l];
        vb[l] = cfg.beta2 * vb[l] + (1.0 - cfg.beta2) * gb[l].cwiseAbs2();
        m.W[l] -= lr *
                  ((mW[l] / c1).array() /
                   ((vW[l] / c2).array().sqrt() + cfg.eps))
                      .matrix();
        m.b[l] -= lr *
                  ((mb[l] / c1).array() /
                   ((vb[l] / c2).array().sqrt() + cfg.eps))
                      .matrix();
      }
    }
    lr *= cfg.lr_decay;
    ep_loss /= static_cast<double>(n_train) * Y.cols();
    if (!std::isfinite(ep_loss)) {
      std::ostringstream msg;
      msg << "mlp: training diverged at epoch " << ep << " (loss " << ep_loss
          << ", lr " << cfg.lr << ")";
      throw ModelError(msg.str());
    }
    out.epoch_mse.push_back(ep_loss);
  }
  out.model = m;
  out.train_mse = mse_std(m, X, Y, train_idx);
  out.test_mse = mse_std(m, X, Y, test_idx);
  return out;
}

TrainResult train(const LibraryFile& lib, const TrainConfig& cfg) {
  const int n = static_cast<int>(lib.records.size());
  if (n < 10) throw ModelError("mlp: need >= 10 feasible records to train");
  Mat X(n, 6), Y(n, 9);
  for (int i = 0; i < n; ++i) {
    X.row(i) = lib.records[i].f.as_vec().transpose();
    Y.row(i) = lib.records[i].coeffs.transpose();
  }
  return train_xy(X, Y, cfg);
}

double grad_check(const MlpModel& m, const Vec& x, const Vec& target) {
  m.validate();
  // nudge the input off ReLU kinks so the finite differences are clean
  Vec xp = x;
  for (int tries = 0; tries < 8; ++tries) {
    Tape tp;
    const Vec xn = (xp - m.in_mean).cwiseQuotient(m.in_scale);
    forward_tape(m, xn, tp);
    double near = 1.0;
    for (std::size_t l = 0; l + 1 < m.W.size(); ++l)
      near = std::min(near, tp.pre[l].cwiseAbs().minCoeff());
    if (near > 1e-5) break;
    xp.array() += 1e-3 * (tries + 1);
  }
  const Vec xn = (xp - m.in_mean).cwiseQuotient(m.in_scale);
  std::vector<Mat> gW;
  std::vector<Vec> gb;
  for (std::size_t l = 0; l < m.W.size(); ++l) {
    gW.push_back(Mat::Zero(m.W[l].rows(), m.W[l].cols()));
    gb.push_back(Vec::Zero(m.b[l].size()));
  }
  Tape tp;
  forward_tape(m, xn, tp);
  backward(m, tp, target, gW, gb);

  auto loss_at = [&](const MlpModel& mm) {
    return 0.5 * (mm.forward_std(xp) - target).squaredNorm();
  };
  const double h = 1e-6;
  double worst = 0.0;
  MlpModel probe = m;
  for (std::size_t l = 0; l < m.W.size(); ++l) {
    for (int i = 0; i < m.W[l].rows(); ++i) {
      for (int j = 0; j < m.W[l].cols(); ++j) {
        probe.W[l](i, j) = m.W[l](i, j) + h;
        const double fp = loss_at(probe);
        probe.W[l](i, j) = m.W[l](i, j) - h;
        const double fm = loss_at(probe);
        probe.W[l](i, j) = m.W[l](i, j);
        const double fd = (fp - fm) / (2.0 * h);
        const double scale = std::max({1.0, std::abs(fd), std::abs(gW[l](i, j))});
        worst = std::max(worst, std::abs(fd - gW[l](i, j)) / scale);
      }
      probe.b[l](i) = m.b[l](i) + h;
      const double fp = loss_at(probe);
      probe.b[l](i) = m.b[l](i) - h;
      const double fm = loss_at(probe);
      probe.b[l](i) = m.b[l](i);
      const double fd = (fp - fm) / (2.0 * h);
      const double scale = std::max({1.0, std::abs(fd), std::abs(gb[l](i))});
      worst = std::max(worst, std::abs(fd - gb[l](i)) / scale);
    }
  }
  return worst;
}

namespace {

constexpr char kMlpMagic[] = "mlp-v1";

void put_block(std::ostream& os, const double* p, std::size_t n) {
  os.write(reinterpret_cast<const char*>(p),
           static_cast<std::streamsize>(n * sizeof(double)));
}

void get_block(std::istream& is, double* p, std::size_t n) {
  is.read(reinterpret_cast<char*>(p),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (is.gcount() != static_cast<std::streamsize>(n * sizeof(double)))
    throw ModelError("mlp: truncated weights file");
}

}  // namespace

void save_mlp(const MlpModel& m, const std::string& path) {
  m.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ModelError("mlp: cannot open " + path);
  os << kMlpMagic << "\nsizes";
  for (int s : m.sizes) os << " " << s;
  os << "\ndata\n";
  for (std::size_t l = 0; l < m.W.size(); ++l) {
    // row-major weight block, then bias
    const Mat wt = m.W[l].transpose();  // Eigen default is column-major
    put_block(os, wt.data(), static_cast<std::size_t>(wt.size()));
    put_block(os, m.b[l].data(), static_cast<std::size_t>(m.b[l].size()));
  }
  put_block(os, m.in_mean.data(), m.in_mean.size());
  put_block(os, m.in_scale.data(), m.in_scale.size());
  put_block(os, m.out_mean.data(), m.out_mean.size());
  put_block(os, m.out_scale.data(), m.out_scale.size());
  if (!os) throw ModelError("mlp: write failed for " + path);
}

MlpModel load_mlp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ModelError("mlp: cannot open " + path);
  std::string line;
  std::getline(is, line);
  if (line != kMlpMagic) throw ModelError("mlp: bad version tag in " + path);
  std::getline(is, line);
  std::istringstream hs(line);
  std::string word;
  hs >> word;
  if (word != "sizes") throw ModelError("mlp: malformed header in " + path);
  MlpModel m;
  int s;
  while (hs >> s) m.sizes.push_back(s);
  if (m.sizes.size() < 2) throw ModelError("mlp: bad shape table in " + path);
  std::getline(is, line);
  if (line != "data") throw ModelError("mlp: malformed header in " + path);
  for (std::size_t l = 0; l + 1 < m.sizes.size(); ++l) {
    Mat wt(m.sizes[l], m.sizes[l + 1]);
    get_block(is, wt.data(), static_cast<std::size_t>(wt.size()));
    m.W.push_back(wt.transpose());
    Vec bb(m.sizes[l + 1]);
    get_block(is, bb.data(), static_cast<std::size_t>(bb.size()));
    m.b.push_back(bb);
  }
  m.in_mean.resize(m.sizes.front());
  m.in_scale.resize(m.sizes.front());
  m.out_mean.resize(m.sizes.back());
  m.out_scale.resize(m.sizes.back());
  get_block(is, m.in_mean.data(), m.in_mean.size());
  get_block(is, m.in_scale.data(), m.in_scale.size());
  get_block(is, m.out_mean.data(), m.out_mean.size());
  get_block(is, m.out_scale.data(), m.out_scale.size());
  char extra;
  if (is.read(&extra, 1)) throw ModelError("mlp: trailing bytes in " + path);
  m.validate();
  return m;
}

}  // namespace lk
