#include "mud/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace mud {

double channel_strength(const MatC& H_hat_u) {
  require(H_hat_u.allFinite(), ErrorKind::Numeric, "channel_strength: non-finite matrix");
  return H_hat_u.squaredNorm() /
         (static_cast<double>(H_hat_u.rows()) * static_cast<double>(H_hat_u.cols()));
}

std::vector<int> rank_users(const std::vector<double>& strengths) {
  require(!strengths.empty(), ErrorKind::Usage, "rank_users: empty strength set");
  std::vector<int> order(strengths.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return strengths[a] > strengths[b]; });
  return order;
}

GroupingPlan greedy_group(const std::vector<int>& order, const std::vector<int>& tx_antennas,
                          int n_thres) {
  require(n_thres >= 1, ErrorKind::Config, "greedy_group: threshold must be >= 1");
  GroupingPlan plan;
  plan.threshold = n_thres;
  std::vector<int> cur;
  int streams = 0;
  for (int u : order) {
    const int nt = tx_antennas[static_cast<size_t>(u)];
    if (nt > n_thres && cur.empty()) {
      // oversize single user: admit alone and flag
      plan.groups.push_back({u});
      plan.oversize.push_back(u);
      continue;
    }
    if (streams + nt > n_thres && !cur.empty()) {
      plan.groups.push_back(cur);
      cur.clear();
      streams = 0;
      if (nt > n_thres) {
        plan.groups.push_back({u});
        plan.oversize.push_back(u);
        continue;
      }
    }
    cur.push_back(u);
    streams += nt;
  }
  if (!cur.empty()) plan.groups.push_back(cur);
  return plan;
}

VecC sic_residual(const VecC& y0, const std::vector<MatC>& H_hat,
                  const std::vector<VecC>& x_out, const GroupingPlan& plan, int upto_group) {
  VecC y = y0;
  for (int gi = 0; gi < upto_group; ++gi) {
    for (int u : plan.groups[static_cast<size_t>(gi)]) {
      const auto& H = H_hat[static_cast<size_t>(u)];
      const auto& x = x_out[static_cast<size_t>(u)];
      require(H.cols() == x.size() && H.rows() == y.size(), ErrorKind::Shape,
              "sic_residual: shape mismatch at user " + std::to_string(u));
      y -= H * x;
    }
  }
  return y;
}

int pipeline_timestep(double sbar_sq, int n_t, const NoiseSchedule& sched, TimestepMapping map) {
  if (map == TimestepMapping::PaperFormula) return compute_source_timestep(sbar_sq, sched);
  const double per_component = sbar_sq / (2.0 * static_cast<double>(n_t));
  return sched.timestep_of_sigma(std::sqrt(per_component));
}

double pipeline_noise_power(const MemoryBuffer& buffer, int user, double sigma_n_sq,
                            double sigma_H_sq, TimestepMapping map) {
  if (map == TimestepMapping::EmpiricalBridge)
    return buffer.empirical_noise_power(user, sigma_n_sq, sigma_H_sq);
  return buffer.equivalent_noise_power(user, sigma_n_sq, sigma_H_sq);
}

namespace {

using Clock = std::chrono::steady_clock;

double us_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::micro>(Clock::now() - t0).count();
}

}  // namespace

DemodResult demodulate(const DemodSample& sample, const PipelineModels& models,
                       const NoiseSchedule& sched, const MemoryBuffer& buffer,
                       const Constellation& constellation, const PipelineOptions& opts) {
  if (opts.refine == RefineMode::StudentSingleStep) {
    require(models.student != nullptr, ErrorKind::Usage, "demodulate: student model required");
  } else {
    require(models.teacher != nullptr && opts.grid != nullptr, ErrorKind::Usage,
            "demodulate: teacher model and sigma grid required");
  }
  require(!opts.use_aligner || models.aligner != nullptr, ErrorKind::Usage,
          "demodulate: aligner model required");
  const auto t_total = Clock::now();

  const int users = static_cast<int>(sample.estimates.H_hat.size());
  const int nr = static_cast<int>(sample.y.size());
  const int n_thres = opts.n_thres > 0 ? opts.n_thres : nr;

  std::vector<double> strengths(users);
  std::vector<int> tx(users);
  for (int u = 0; u < users; ++u) {
    strengths[static_cast<size_t>(u)] = channel_strength(sample.estimates.H_hat[u]);
    tx[static_cast<size_t>(u)] = static_cast<int>(sample.estimates.H_hat[u].cols());
  }
  GroupingPlan plan = greedy_group(rank_users(strengths), tx, n_thres);

  DemodResult res;
  res.plan = plan;
  res.x_out.resize(users);
  res.bits.resize(users);
  res.timesteps.assign(users, 0);

  VecC y_res = sample.y;
  for (size_t gi = 0; gi < plan.groups.size(); ++gi) {
    const auto& group = plan.groups[gi];
    res.residuals.push_back(y_res);
    try {
      // Later groups act as interference: diagonal power inflation of the
      // noise by their channel energy per receive antenna.
      double interference = 0.0;
      for (size_t gj = gi + 1; gj < plan.groups.size(); ++gj)
        for (int u : plan.groups[gj])
          interference += sample.estimates.H_hat[static_cast<size_t>(u)].squaredNorm() / nr;
      const double sigma_eff = sample.noise_var + interference;

      std::vector<MatC> Hg;
      std::vector<int> txg;
      for (int u : group) {
        Hg.push_back(sample.estimates.H_hat[static_cast<size_t>(u)]);
        txg.push_back(tx[static_cast<size_t>(u)]);
      }
      const auto t_coarse = Clock::now();
      const MatC Hs = stack_channels(Hg);
      const std::vector<VecC> coarse = split_streams(lmmse_demod(y_res, Hs, sigma_eff), txg);
      res.timing.coarse_us += us_since(t_coarse);

      // per-user timestep from the buffer's equivalent noise power
      std::vector<int> t_hat(group.size());
      for (size_t k = 0; k < group.size(); ++k) {
        const int u = group[k];
        const double sbar = pipeline_noise_power(
            buffer, u, sigma_eff, sample.estimates.est_mse[static_cast<size_t>(u)],
            opts.mapping);
        t_hat[k] = pipeline_timestep(sbar, txg[k], sched, opts.mapping);
        res.timesteps[static_cast<size_t>(u)] = t_hat[k];
      }
      const int t_align = align_target(t_hat);

      // align every user's scaled estimate to the common timestep
      const auto t_align_clock = Clock::now();
      std::vector<VecC> aligned(group.size());
      for (size_t k = 0; k < group.size(); ++k) {
        const double scale = std::sqrt(sched.abar(t_hat[k]));
        const VecC scaled = scale * coarse[k];
        if (opts.use_aligner && t_hat[k] > 0) {
          aligned[k] = models.aligner->align(scaled, t_hat[k], t_align);
          res.timing.network_calls += 1;
        } else {
          aligned[k] = scaled;
        }
      }
      res.timing.align_us += us_since(t_align_clock);

      // group VE state at t_align
      int L = 0;
      for (int nt : txg) L += nt;
      MatD s_ve(L, 2);
      int at = 0;
      for (size_t k = 0; k < group.size(); ++k) {
        s_ve.middleRows(at, txg[k]) = realify(aligned[k]) / std::sqrt(sched.abar(t_align));
        at += txg[k];
      }

      CondView view;
      for (size_t k = 0; k < group.size(); ++k) {
        view.H_hat.push_back(&sample.estimates.H_hat[static_cast<size_t>(group[k])]);
        view.user_ids.push_back(static_cast<int>(k));  // self-contained subproblem
      }
      view.y = &y_res;
      view.users = static_cast<int>(group.size());
      view.nr = nr;
      view.t = t_align;

      const auto t_refine = Clock::now();
      MatD x0;
      if (opts.refine == RefineMode::StudentSingleStep) {
        x0 = student_single_step(*models.student, s_ve, t_align, view, sched);
        if (t_align > 0) res.timing.network_calls += 1;
      } else {
        const int avail = teacher_steps_available(t_align, sched, *opts.grid);
        const int steps = std::min(opts.teacher_steps, avail);
        x0 = teacher_sample(*models.teacher, s_ve, t_align, view, sched, *opts.grid, steps);
        if (t_align > 0) res.timing.network_calls += steps;
      }
      res.timing.refine_us += us_since(t_refine);

      const std::vector<VecC> refined = split_streams(complexify(x0), txg);
      for (size_t k = 0; k < group.size(); ++k) {
        const int u = group[k];
        res.x_out[static_cast<size_t>(u)] = refined[k];
        auto hd = hard_demap(refined[k], constellation);
        res.bits[static_cast<size_t>(u)] = std::move(hd.bits);
        // subtract this user's reconstructed contribution for later groups
        y_res -= sample.estimates.H_hat[static_cast<size_t>(u)] * refined[k];
      }
    } catch (Error& e) {
      throw Error(e.kind(), "group " + std::to_string(gi) + ": " + e.what());
    }
  }
  res.timing.total_us = us_since(t_total);
  return res;
}

DemodResult demodulate_baseline(const DemodSample& sample, BaselineMethod method,
                                const Constellation& constellation) {
  DemodResult res;
  const int users = static_cast<int>(sample.estimates.H_hat.size());
  std::vector<int> tx(users);
  for (int u = 0; u < users; ++u)
    tx[static_cast<size_t>(u)] = static_cast<int>(sample.estimates.H_hat[u].cols());
  const auto t0 = Clock::now();
  const MatC Hs = stack_channels(sample.estimates.H_hat);
  const VecC x = method == BaselineMethod::LS ? ls_demod(sample.y, Hs)
                                              : lmmse_demod(sample.y, Hs, sample.noise_var);
  res.timing.coarse_us = us_since(t0);
  res.x_out = split_streams(x, tx);
  res.bits.resize(users);
  for (int u = 0; u < users; ++u) {
    auto hd = hard_demap(res.x_out[static_cast<size_t>(u)], constellation);
    res.x_out[static_cast<size_t>(u)] = hd.symbols;
    res.bits[static_cast<size_t>(u)] = std::move(hd.bits);
  }
  res.timing.total_us = us_since(t0);
  res.plan.threshold = 0;
  return res;
}

}  // namespace mud
