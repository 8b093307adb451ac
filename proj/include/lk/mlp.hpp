#pragma once

#include <string>
#include <vector>

#include "lk/trajlib.hpp"

namespace lk {

// Feedforward ReLU network, identity output.  Inputs are normalized and
// outputs de-standardized inside forward, so callers work in raw units.
struct MlpModel {
  std::vector<int> sizes;  // {6, hidden..., 9}
  std::vector<Mat> W;      // W[l] has shape sizes[l+1] x sizes[l]
  std::vector<Vec> b;
  Vec in_mean, in_scale;
  Vec out_mean, out_scale;

  void validate() const;
  Vec forward(const Vec& x) const;
  // network output in standardized target space (used by the trainer)
  Vec forward_std(const Vec& x) const;
};

MlpModel make_mlp(const std::vector<int>& sizes, unsigned seed);

struct TrainConfig {
  std::vector<int> hidden = {64, 64, 64};
  double lr = 1e-3;
  double lr_decay = 0.995;  // per-epoch geometric decay
  int batch = 32;
  int epochs = 400;
  double train_fraction = 0.85;
  unsigned seed = 1;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  void validate() const;
};

struct TrainResult {
  MlpModel model;
  double train_mse = 0.0;  // standardized-target units
  double test_mse = 0.0;
  std::vector<double> epoch_mse;
};

// X: n x 6 feature rows, Y: n x 9 coefficient rows.
TrainResult train_xy(const Mat& X, const Mat& Y, const TrainConfig& cfg);
TrainResult train(const LibraryFile& lib, const TrainConfig& cfg);

// Backprop vs central finite differences on 1/2 ||forward_std(x) - t||^2;
// returns the max relative error over all parameters.
double grad_check(const MlpModel& m, const Vec& x, const Vec& target);

void save_mlp(const MlpModel& m, const std::string& path);
MlpModel load_mlp(const std::string& path);

}  // namespace lk
