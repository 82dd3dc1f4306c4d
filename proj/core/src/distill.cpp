#include "mud/distill.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace mud {

double channel_energy_ratio(const std::vector<MatC>& H_hat, double sigma_n_sq, int users) {
  double e = 0.0;
  for (const auto& h : H_hat) e += h.squaredNorm();
  return e / (static_cast<double>(users) * sigma_n_sq);
}

double adaptive_weight(const std::vector<MatC>& H_hat, double sigma_n_sq, int users, double k0,
                       double s0) {
  require(sigma_n_sq >= 0.0, ErrorKind::Config, "adaptive_weight: negative noise power");
  if (sigma_n_sq == 0.0) return 1.0;  // infinite-SNR convention
  const double r = channel_energy_ratio(H_hat, sigma_n_sq, users);
  return 1.0 / (1.0 + std::exp(-k0 * (r - s0)));
}

double consistency_loss(const MatD& a, const MatD& b, double lambda_t) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::Shape,
          "consistency_loss: shape mismatch");
  return lambda_t * (a - b).norm();
}

MatD student_single_step(const DiT& student, const MatD& s_ve, int t_align, const CondView& view,
                         const NoiseSchedule& sched) {
  if (t_align == 0) return s_ve;
  const MatD eps = eps_for_ve_state(student, s_ve, t_align, view, sched);
  return s_ve - sched.sigma(t_align) * eps;
}

namespace {

CondView view_of(const DemodSample& s, int t) {
  CondView v;
  for (size_t u = 0; u < s.estimates.H_hat.size(); ++u) {
    v.H_hat.push_back(&s.estimates.H_hat[u]);
    v.user_ids.push_back(static_cast<int>(u));
  }
  v.y = &s.y;
  v.users = static_cast<int>(s.estimates.H_hat.size());
  v.nr = static_cast<int>(s.y.size());
  v.t = t;
  return v;
}

constexpr int kChunk = 8;

}  // namespace

DistillResult distill_run(const DiT& teacher, DiT& student, DiT& ema,
                          const std::vector<DemodSample>& data, const NoiseSchedule& sched,
                          const DistillConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  require(!data.empty(), ErrorKind::Config, "distill_run: empty dataset");
  require(teacher.params().count() == student.params().count() &&
              teacher.params().count() == ema.params().count(),
          ErrorKind::Config, "distill_run: student/ema must share the teacher architecture");

  student.params().copy_values_from(teacher.params());
  ema.params().copy_values_from(student.params());

  const std::vector<double> grid = make_sigma_grid(sched, cfg.grid_points);
  if (!cfg.lambda_weights.empty())
    require(static_cast<int>(cfg.lambda_weights.size()) >= cfg.grid_points - 1,
            ErrorKind::Config, "distill_run: lambda weight count mismatch");

  DistillResult result;
  // Resolve the adaptive-weight center from the training set when unset.
  if (cfg.s0 >= 0.0) {
    result.s0 = cfg.s0;
  } else {
    std::vector<double> ratios(data.size());
    for (size_t i = 0; i < data.size(); ++i)
      ratios[i] = channel_energy_ratio(data[i].estimates.H_hat, data[i].noise_var,
                                       static_cast<int>(data[i].estimates.H_hat.size()));
    auto mid = ratios.begin() + static_cast<std::ptrdiff_t>(ratios.size() / 2);
    std::nth_element(ratios.begin(), mid, ratios.end());
    result.s0 = *mid;
  }
  const double s0 = result.s0;

  nn::AdamW<float> opt(cfg.learning_rate, 0.0);  // Adam
  const int n = static_cast<int>(data.size());
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  Rng shuffle_rng(derive_seed(cfg.seed, 0xd157));
  const unsigned hw = std::thread::hardware_concurrency();
  const int threads = cfg.threads > 0 ? cfg.threads : (hw == 0 ? 1 : static_cast<int>(hw));

  auto& sp = student.params();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int bsz = std::min(cfg.batch_size, n - start);
      const int n_chunks = (bsz + kChunk - 1) / kChunk;
      std::vector<std::vector<nn::Mat<float>>> chunk_grads(n_chunks);
      std::vector<double> chunk_loss(n_chunks, 0.0);
      std::atomic<int> cursor{0};

      auto worker = [&] {
        for (;;) {
          const int ci = cursor.fetch_add(1);
          if (ci >= n_chunks) return;
          for (int k = ci * kChunk; k < std::min(bsz, (ci + 1) * kChunk); ++k) {
            const int idx = order[start + k];
            const DemodSample& s = data[static_cast<size_t>(idx)];
            Rng rng(derive_seed(cfg.seed, static_cast<uint64_t>(epoch) * 0x20003 + 11,
                                static_cast<uint64_t>(idx)));
            const MatD x0 = stacked_symbols(s);

            const int gi = rng.below_int(cfg.grid_points - 1);
            const double sig_next = grid[gi + 1];  // t_{n+1}
            const double sig_cur = grid[gi];       // t_n
            MatD eps(x0.rows(), 2);
            for (Eigen::Index r = 0; r < eps.rows(); ++r)
              for (int c = 0; c < 2; ++c) eps(r, c) = rng.normal();
            const MatD x_next = x0 + sig_next * eps;

            // teacher Euler step to the adjacent grid point
            const int t_next = sched.timestep_of_sigma(sig_next);
            const int t_cur = sched.timestep_of_sigma(sig_cur);
            const MatD teps = eps_for_ve_state(teacher, x_next, t_next, view_of(s, t_next), sched);
            const MatD x_cur = x_next + (sig_cur - sig_next) * teps;

            // EMA target (gradient-stopped by construction)
            const MatD ema_eps = eps_for_ve_state(ema, x_cur, t_cur, view_of(s, t_cur), sched);
            const MatD ema_out = x_cur - sig_cur * ema_eps;

            const double lambda_t =
                cfg.lambda_weights.empty() ? 1.0 : cfg.lambda_weights[static_cast<size_t>(gi)];
            const double eta = adaptive_weight(s.estimates.H_hat, s.noise_var,
                                               static_cast<int>(s.estimates.H_hat.size()),
                                               cfg.k0, s0);

            nn::Graph<float> g;
            auto bd = nn::bind(g, sp, true);
            CondView v = view_of(s, t_next);
            auto c1 = student.condition(g, bd, v);
            const MatD z = std::sqrt(sched.abar(t_next)) * x_next;
            auto e1 = student.predict_eps(g, bd, g.constant(z.cast<float>()), c1);
            auto out1 = g.sub(g.constant(x_next.cast<float>()),
                              g.scale(e1, static_cast<float>(sig_next)));
            auto l_cd = g.scale(g.sqrt_eps(g.sq_sum(g.sub(out1, g.constant(ema_out.cast<float>()))),
                                           1e-12f),
                                static_cast<float>(lambda_t));
            auto l_mse = g.sq_sum(g.sub(out1, g.constant(x0.cast<float>())));
            auto loss = g.add(g.scale(l_cd, static_cast<float>(eta)),
                              g.scale(l_mse, static_cast<float>(1.0 - eta)));
            chunk_loss[ci] += static_cast<double>(g.val(loss)(0, 0));
            g.backward(loss);
            nn::harvest_grads(g, bd, sp, chunk_grads[ci]);
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

      sp.zero_grad();
      double batch_loss = 0.0;
      for (int ci = 0; ci < n_chunks; ++ci) {
        batch_loss += chunk_loss[ci];
        for (int p = 0; p < sp.count(); ++p)
          if (ci < static_cast<int>(chunk_grads[ci].size()) && chunk_grads[ci][p].size() != 0)
            sp.at(p).grad += chunk_grads[ci][p];
      }
      const float inv = static_cast<float>(1.0 / bsz);
      for (int p = 0; p < sp.count(); ++p) sp.at(p).grad *= inv;
      opt.step(sp);
      epoch_loss += batch_loss;

      // EMA update: theta_minus <- mu theta_minus + (1 - mu) theta
      auto& ep = ema.params();
      const auto mu = static_cast<float>(cfg.mu);
      for (int p = 0; p < ep.count(); ++p)
        ep.at(p).value = mu * ep.at(p).value + (1.0f - mu) * sp.at(p).value;

      if (!std::isfinite(batch_loss) || !sp.all_finite())
        throw Error(ErrorKind::Training,
                    "distillation diverged (non-finite loss) at epoch " + std::to_string(epoch));
    }
    epoch_loss /= n;
    result.loss_trace.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }
  return result;
}

}  // namespace mud
