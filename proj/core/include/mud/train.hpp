#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mud/aligner.hpp"
#include "mud/dit.hpp"
#include "mud/nn/params.hpp"
#include "mud/schedule.hpp"
#include "mud/system.hpp"

namespace mud {

enum class Optim { AdamW, Adam };

struct TrainConfig {
  int epochs = 100;
  int batch_size = 64;
  double learning_rate = 1e-3;
  Optim optimizer = Optim::AdamW;
  double weight_decay = 1e-4;
  int T = 1000;
  uint64_t seed = 0;
  int threads = 0;  // 0 -> hardware concurrency

  void validate() const {
    require(epochs >= 0 && batch_size >= 1, ErrorKind::Config, "TrainConfig: invalid counts");
    require(learning_rate > 0.0, ErrorKind::Config, "TrainConfig: learning_rate must be > 0");
  }
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

// Deterministic data-parallel trainer: samples are processed in fixed-size
// chunks whose partial gradients and losses are reduced in chunk order, so
// results are bit-identical for any thread count.
//
// The per-sample builder constructs the loss graph for one dataset index and
// returns the scalar loss node. `rng` is derived from (seed, epoch, index),
// independent of scheduling.
template <class S>
using SampleLossBuilder = std::function<typename nn::Graph<S>::Id(
    nn::Graph<S>&, const nn::Binding<S>&, int sample_index, Rng& rng)>;

template <class S>
std::vector<double> run_training(nn::ParamStore<S>& params, int n_samples,
                                 const TrainConfig& cfg, const SampleLossBuilder<S>& builder,
                                 const EpochCallback& on_epoch = {});

/// Interface for Algorithm-1 style noise-prediction training: the model maps
/// (x_t, t, sample conditions) to a predicted noise matrix.
template <class S>
struct EpsModel {
  virtual ~EpsModel() = default;
  virtual nn::ParamStore<S>& parameters() = 0;
  virtual typename nn::Graph<S>::Id predict(nn::Graph<S>& g, const nn::Binding<S>& bd,
                                            typename nn::Graph<S>::Id x_t, int t,
                                            const DemodSample& s) = 0;
};

/// Stacked realified true symbols of a sample (L x 2).
MatD stacked_symbols(const DemodSample& s);

/// Diffusion-reconstruction training: t ~ U{1..T}, eps ~ N(0,I),
/// x_t = sqrt(abar)x0 + sqrt(1-abar)eps, MSE on the noise prediction.
/// Returns the per-epoch mean loss trace; throws ErrorKind::Training with the
/// epoch index on divergence.
template <class S>
std::vector<double> train_denoiser(EpsModel<S>& model, const std::vector<DemodSample>& data,
                                   const NoiseSchedule& sched, const TrainConfig& cfg,
                                   const EpochCallback& on_epoch = {});

/// EpsModel adapter for the conditional denoiser.
template <class S>
class DiTEpsAdapter final : public EpsModel<S> {
 public:
  explicit DiTEpsAdapter(DiTModel<S>& model) : model_(model) {}
  nn::ParamStore<S>& parameters() override { return model_.params(); }
  typename nn::Graph<S>::Id predict(nn::Graph<S>& g, const nn::Binding<S>& bd,
                                    typename nn::Graph<S>::Id x_t, int t,
                                    const DemodSample& s) override {
    CondView view;
    for (size_t u = 0; u < s.estimates.H_hat.size(); ++u) {
      view.H_hat.push_back(&s.estimates.H_hat[u]);
      view.user_ids.push_back(static_cast<int>(u));
    }
    view.y = &s.y;
    view.users = static_cast<int>(s.estimates.H_hat.size());
    view.nr = static_cast<int>(s.y.size());
    view.t = t;
    typename nn::Graph<S>::Id c = model_.condition(g, bd, view);
    return model_.predict_eps(g, bd, x_t, c);
  }

 private:
  DiTModel<S>& model_;
};

/// Aligner pre-training: t_dst < t_src drawn uniformly, both states built
/// from the same x0 and the same eps; squared error against the destination
/// state. Operates per user symbol vector.
template <class S>
std::vector<double> train_aligner(AlignerModel<S>& model, const std::vector<VecC>& clean_vectors,
                                  const NoiseSchedule& sched, const TrainConfig& cfg,
                                  const EpochCallback& on_epoch = {});

/// Writes a loss trace as CSV (epoch,loss).
void write_loss_csv(const std::string& path, const std::vector<double>& trace);

}  // namespace mud
