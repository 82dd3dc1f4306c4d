#include "mud/train.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <thread>

namespace mud {

namespace {

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Fixed-size work chunks claimed through an atomic cursor; per-chunk results
// are written to chunk-indexed slots so the final reduction order does not
// depend on scheduling.
constexpr int kChunk = 8;

}  // namespace

template <class S>
std::vector<double> run_training(nn::ParamStore<S>& params, int n_samples,
                                 const TrainConfig& cfg, const SampleLossBuilder<S>& builder,
                                 const EpochCallback& on_epoch) {
  cfg.validate();
  require(n_samples > 0, ErrorKind::Config, "run_training: empty dataset");
  const int threads = resolve_threads(cfg.threads);

  nn::AdamW<S> opt(cfg.learning_rate, cfg.weight_decay);
  std::vector<int> order(n_samples);
  for (int i = 0; i < n_samples; ++i) order[i] = i;

  std::vector<double> trace;
  trace.reserve(cfg.epochs);
  Rng shuffle_rng(derive_seed(cfg.seed, 0x5f5f));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (int start = 0; start < n_samples; start += cfg.batch_size) {
      const int bsz = std::min(cfg.batch_size, n_samples - start);
      const int n_chunks = (bsz + kChunk - 1) / kChunk;
      std::vector<std::vector<nn::Mat<S>>> chunk_grads(n_chunks);
      std::vector<double> chunk_loss(n_chunks, 0.0);
      std::atomic<int> cursor{0};

      auto worker = [&] {
        for (;;) {
          const int ci = cursor.fetch_add(1);
          if (ci >= n_chunks) return;
          auto& sink = chunk_grads[ci];
          for (int k = ci * kChunk; k < std::min(bsz, (ci + 1) * kChunk); ++k) {
            const int idx = order[start + k];
            Rng rng(derive_seed(cfg.seed, static_cast<uint64_t>(epoch) * 0x10001 + 7,
                                static_cast<uint64_t>(idx)));
            nn::Graph<S> g;
            auto bd = nn::bind(g, params, true);
            auto loss = builder(g, bd, idx, rng);
            chunk_loss[ci] += static_cast<double>(g.val(loss)(0, 0));
            g.backward(loss);
            nn::harvest_grads(g, bd, params, sink);
          }
        }
      };
      if (threads <= 1 || n_chunks == 1) {
        worker();
      } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < std::min(threads, n_chunks); ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
      }

      params.zero_grad();
      double batch_loss = 0.0;
      for (int ci = 0; ci < n_chunks; ++ci) {
        batch_loss += chunk_loss[ci];
        for (int p = 0; p < params.count(); ++p)
          if (ci < static_cast<int>(chunk_grads[ci].size()) && chunk_grads[ci][p].size() != 0)
            params.at(p).grad += chunk_grads[ci][p];
      }
      const S inv = static_cast<S>(1.0 / bsz);
      for (int p = 0; p < params.count(); ++p) params.at(p).grad *= inv;
      opt.step(params);
      epoch_loss += batch_loss;

      if (!std::isfinite(batch_loss) || !params.all_finite())
        throw Error(ErrorKind::Training,
                    "training diverged (non-finite loss) at epoch " + std::to_string(epoch));
    }
    epoch_loss /= n_samples;
    trace.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }
  return trace;
}

MatD stacked_symbols(const DemodSample& s) {
  int L = 0;
  for (const auto& xu : s.x) L += static_cast<int>(xu.size());
  MatD out(L, 2);
  int at = 0;
  for (const auto& xu : s.x) {
    out.middleRows(at, xu.size()) = realify(xu);
    at += static_cast<int>(xu.size());
  }
  return out;
}

template <class S>
std::vector<double> train_denoiser(EpsModel<S>& model, const std::vector<DemodSample>& data,
                                   const NoiseSchedule& sched, const TrainConfig& cfg,
                                   const EpochCallback& on_epoch) {
  require(!data.empty(), ErrorKind::Config, "train_denoiser: empty dataset");
  SampleLossBuilder<S> builder = [&](nn::Graph<S>& g, const nn::Binding<S>& bd, int idx,
                                     Rng& rng) {
    const DemodSample& s = data[static_cast<size_t>(idx)];
    const MatD x0 = stacked_symbols(s);
    const int t = 1 + rng.below_int(sched.T);
    MatD eps(x0.rows(), x0.cols());
    for (Eigen::Index r = 0; r < eps.rows(); ++r)
      for (Eigen::Index c = 0; c < eps.cols(); ++c) eps(r, c) = rng.normal();
    const MatD x_t = forward_diffuse(x0, t, eps, sched);
    auto xt_id = g.constant(x_t.cast<S>());
    auto pred = model.predict(g, bd, xt_id, t, s);
    auto diff = g.sub(pred, g.constant(eps.cast<S>()));
    return g.scale(g.sq_sum(diff), static_cast<S>(1.0 / (x0.rows() * 2)));
  };
  return run_training<S>(model.parameters(), static_cast<int>(data.size()), cfg, builder,
                         on_epoch);
}

template <class S>
std::vector<double> train_aligner(AlignerModel<S>& model, const std::vector<VecC>& clean,
                                  const NoiseSchedule& sched, const TrainConfig& cfg,
                                  const EpochCallback& on_epoch) {
  require(!clean.empty(), ErrorKind::Config, "train_aligner: empty dataset");
  SampleLossBuilder<S> builder = [&](nn::Graph<S>& g, const nn::Binding<S>& bd, int idx,
                                     Rng& rng) {
    const MatD x0 = realify(clean[static_cast<size_t>(idx)]);
    // t_dst < t_src uniform over ordered pairs from {0..T-1}
    const int t_src = 1 + rng.below_int(sched.T - 1);
    const int t_dst = rng.below_int(t_src);
    MatD eps(x0.rows(), x0.cols());
    for (Eigen::Index r = 0; r < eps.rows(); ++r)
      for (Eigen::Index c = 0; c < eps.cols(); ++c) eps(r, c) = rng.normal();
    const MatD x_src = forward_diffuse(x0, t_src, eps, sched);
    const MatD x_dst = forward_diffuse(x0, t_dst, eps, sched);  // shared eps
    auto out = model.forward(g, bd, g.constant(x_src.cast<S>()), t_src, t_dst);
    auto diff = g.sub(out, g.constant(x_dst.cast<S>()));
    return g.scale(g.sq_sum(diff), static_cast<S>(1.0 / (x0.rows() * 2)));
  };
  return run_training<S>(model.params(), static_cast<int>(clean.size()), cfg, builder, on_epoch);
}

void write_loss_csv(const std::string& path, const std::vector<double>& trace) {
  std::ofstream os(path);
  require(os.good(), ErrorKind::Io, "cannot write loss trace: " + path);
  os << "epoch,loss\n";
  char buf[64];
  for (size_t i = 0; i < trace.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.10g\n", i, trace[i]);
    os << buf;
  }
}

template std::vector<double> run_training<float>(nn::ParamStore<float>&, int, const TrainConfig&,
                                                 const SampleLossBuilder<float>&,
                                                 const EpochCallback&);
template std::vector<double> run_training<double>(nn::ParamStore<double>&, int,
                                                  const TrainConfig&,
                                                  const SampleLossBuilder<double>&,
                                                  const EpochCallback&);
template std::vector<double> train_denoiser<float>(EpsModel<float>&,
                                                   const std::vector<DemodSample>&,
                                                   const NoiseSchedule&, const TrainConfig&,
                                                   const EpochCallback&);
template std::vector<double> train_denoiser<double>(EpsModel<double>&,
                                                    const std::vector<DemodSample>&,
                                                    const NoiseSchedule&, const TrainConfig&,
                                                    const EpochCallback&);
template std::vector<double> train_aligner<float>(AlignerModel<float>&, const std::vector<VecC>&,
                                                  const NoiseSchedule&, const TrainConfig&,
                                                  const EpochCallback&);
template std::vector<double> train_aligner<double>(AlignerModel<double>&,
                                                   const std::vector<VecC>&,
                                                   const NoiseSchedule&, const TrainConfig&,
                                                   const EpochCallback&);

}  // namespace mud
