#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gbm/loss.hpp"
#include "gbm/net.hpp"

namespace gbm {

struct AdamState {
  std::vector<double> m, v;
  long t = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

// Standard ADAM with bias correction; params and grads must be same length.
void adam_step(std::vector<double>& params, const std::vector<double>& grads,
               AdamState& state, double lr);

struct LbfgsConfig {
  int history = 100;
  int max_line_search = 50;
  double tol = 2.3e-9;  // relative objective decrease per iteration
  long max_iters = 20000;
};

struct LbfgsResult {
  long iters = 0;
  double final_loss = 0.0;
  bool converged = false;           // relative-decrease tolerance reached
  bool line_search_failed = false;  // returned best-so-far
};

// Objective with gradient: f(x, grad_out) -> value.
using Objective = std::function<double(const std::vector<double>&, std::vector<double>&)>;

// Two-loop recursion with strong Wolfe line search. on_accept (optional) is
// called after every accepted step; returning false stops the run.
LbfgsResult lbfgs_minimize(const Objective& f, std::vector<double>& x,
                           const LbfgsConfig& cfg,
                           const std::function<bool(long, double)>& on_accept = nullptr);

struct StageConfig {
  Stage stage = Stage::Pretrain;
  long max_iters = 20000;  // ADAM cap (20000 pretrain / 5000 finetune)
  double adam_lr = 1e-3;   // 1e-3 pretrain / 1e-4 finetune
  long early_stop_patience = 1000;
  int test_every = 1;  // test-loss evaluation cadence in iterations
  LbfgsConfig lbfgs;
};

struct TrainIter {
  long iter = 0;
  LossTerms train;
  double test_total = 0.0;
  char phase = 'A';  // 'A' adam, 'L' lbfgs
};

struct TrainRecord {
  std::vector<TrainIter> iters;
  LossTerms final_train, final_test;
  std::string stop_reason;
  long adam_iters = 0, lbfgs_iters = 0;
};

// ADAM phase with train/test-patience early stopping, then L-BFGS phase.
// Optimizes network weights plus the unfrozen theta entries of state.theta.
TrainRecord train_stage(NetworkState& state, const CollocationBatch& train_batch,
                        const CollocationBatch& test_batch, const LossSpec& spec,
                        const StageConfig& cfg);

void write_record_csv(const TrainRecord& rec, const std::string& path);

// Theta slot packing shared with the loss gradient layout.
std::vector<double> pack_params(const NetworkState& state);
void unpack_params(const std::vector<double>& x, NetworkState& state);

}  // namespace gbm
