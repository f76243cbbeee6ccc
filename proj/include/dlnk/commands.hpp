#pragma once

// Command implementations behind the CLI driver. Each takes a fully
// validated RunConfig, loads what it needs, and returns a complete JSON
// report (see report.hpp for the schema). Everything outside the
// "provenance" block is reproduced byte for byte by identical configs and
// seeds at any worker count: all Monte Carlo goes through chunk-ordered
// deterministic reductions with per-draw substreams.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dlnk/config.hpp"
#include "dlnk/conv.hpp"
#include "dlnk/errors.hpp"
#include "dlnk/evidence.hpp"
#include "dlnk/fc.hpp"
#include "dlnk/ldp.hpp"
#include "dlnk/montecarlo.hpp"
#include "dlnk/posterior.hpp"
#include "dlnk/report.hpp"

namespace dlnk {

namespace detail {

inline Json architecture_echo(const RunConfig& cfg) {
  Json a;
  a["kind"] = to_string(cfg.kind);
  if (cfg.kind == ArchitectureKind::fc) {
    a["input_dim"] = cfg.fc.n0;
    a["output_dim"] = cfg.fc.d;
    a["widths"] = cfg.fc.widths;
    a["precisions"] = to_json(cfg.fc.precisions);
  } else {
    a["input_dim"] = cfg.conv.n0;
    a["channels"] = cfg.conv.channels;
    a["mask"] = cfg.conv.mask;
    a["precisions"] = to_json(cfg.conv.precisions);
  }
  return a;
}

// Everything that determines the numeric payload; worker count is excluded
// on purpose (it lives in provenance and must not affect the numbers).
inline Json config_echo(const RunConfig& cfg) {
  Json c;
  c["architecture"] = architecture_echo(cfg);
  Json run;
  run["seed"] = cfg.seed;
  run["n_samples"] = cfg.n_samples;
  run["n_steps"] = cfg.n_steps;
  run["step_size"] = cfg.step_size;
  run["sampler"] = cfg.sampler;
  if (cfg.beta_set) run["beta"] = cfg.beta;
  c["run"] = std::move(run);
  Json data;
  if (!cfg.train_path.empty()) data["train"] = cfg.train_path;
  if (!cfg.test_path.empty()) data["test"] = cfg.test_path;
  if (!data.empty()) c["data"] = std::move(data);
  if (cfg.command == Command::evidence) {
    Json ev;
    ev["mode"] = cfg.evidence.mode;
    ev["method"] = cfg.evidence.method;
    if (!cfg.evidence.compare.empty()) ev["compare"] = cfg.evidence.compare;
    ev["mc_draws"] = cfg.evidence.mc_draws;
    c["evidence"] = std::move(ev);
  }
  if (cfg.command == Command::ldp) {
    Json ldp;
    ldp["objective"] = cfg.ldp.objective;
    ldp["ladder"] = cfg.ldp.ladder;
    ldp["probe_draws"] = cfg.ldp.probe_draws;
    ldp["gradient_tolerance"] = cfg.ldp.gradient_tolerance;
    ldp["max_iterations"] = cfg.ldp.max_iterations;
    c["ldp"] = std::move(ldp);
  }
  return c;
}

// First few index pairs, used for reporting sampled cross moments.
inline std::vector<std::pair<int, int>> leading_pairs(Eigen::Index dim,
                                                      std::size_t cap) {
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < dim; ++i)
    for (int j = i + 1; j < dim && pairs.size() < cap; ++j)
      pairs.emplace_back(i, j);
  return pairs;
}

struct MomentComparison {
  Json moments_a;
  Json moments_b;
  Json z_scores;
  double max_z = 0.0;
};

inline MomentComparison compare_moments(const MomentAccumulator& a,
                                        const MomentAccumulator& b) {
  MomentComparison out;
  auto block = [&](auto stat_of) {
    Json means_a = Json::array(), means_b = Json::array(),
         zs = Json::array();
    for (Eigen::Index i = 0; i < a.dim(); ++i) {
      const auto sa = stat_of(a, i);
      const auto sb = stat_of(b, i);
      const double z = z_score(sa, sb);
      means_a.push_back(sa.mean);
      means_b.push_back(sb.mean);
      zs.push_back(z);
      out.max_z = std::max(out.max_z, z);
    }
    return std::tuple{means_a, means_b, zs};
  };
  auto [f_a, f_b, f_z] = block(
      [](const MomentAccumulator& m, Eigen::Index i) { return m.first(i); });
  auto [s_a, s_b, s_z] = block(
      [](const MomentAccumulator& m, Eigen::Index i) { return m.second(i); });
  auto [q_a, q_b, q_z] = block(
      [](const MomentAccumulator& m, Eigen::Index i) { return m.fourth(i); });
  Json c_a = Json::array(), c_b = Json::array(), c_z = Json::array();
  for (std::size_t k = 0; k < a.n_pairs(); ++k) {
    const auto sa = a.cross(k);
    const auto sb = b.cross(k);
    const double z = z_score(sa, sb);
    c_a.push_back(sa.mean);
    c_b.push_back(sb.mean);
    c_z.push_back(z);
    out.max_z = std::max(out.max_z, z);
  }
  out.moments_a = {{"first", f_a}, {"second", s_a}, {"fourth", q_a},
                   {"cross", c_a}};
  out.moments_b = {{"first", f_b}, {"second", s_b}, {"fourth", q_b},
                   {"cross", c_b}};
  out.z_scores = {{"first", f_z}, {"second", s_z}, {"fourth", q_z},
                  {"cross", c_z}};
  return out;
}

template <class SampleOne>
MomentAccumulator accumulate_moments(std::int64_t n, Eigen::Index dim,
                                     const std::vector<std::pair<int, int>>&
                                         pairs,
                                     const RngStream& rng, int threads,
                                     SampleOne sample_one) {
  return chunked_reduce<MomentAccumulator>(
      n, threads, [&] { return MomentAccumulator(dim, pairs); },
      [&](MomentAccumulator& acc, std::int64_t i) {
        RngStream sub = rng.substream(static_cast<std::uint64_t>(i));
        acc.add(sample_one(sub));
      },
      [](MomentAccumulator& into, const MomentAccumulator& from) {
        into.merge(from);
      });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// sample-prior: draw from both prior representations and cross-check moments
// ---------------------------------------------------------------------------

inline Json cmd_sample_prior(const RunConfig& cfg) {
  ReportTimer timer;
  Json results, diagnostics;
  const std::int64_t n = cfg.n_samples;

  if (cfg.kind == ArchitectureKind::fc) {
    const FcDataset data =
        load_fc_csv(cfg.resolve(cfg.train_path), cfg.fc, false);
    cfg.fc.require_mixture();
    const Eigen::Index dim = cfg.fc.d * data.x.cols();
    const auto pairs = detail::leading_pairs(dim, 10);
    const auto mixture = detail::accumulate_moments(
        n, dim, pairs, RngStream(cfg.seed, 0), cfg.threads,
        [&](RngStream& sub) {
          const Matrix s = sample_prior_mixture_one(cfg.fc, data.x, sub);
          return Vector(Eigen::Map<const Vector>(s.data(), dim));
        });
    const auto weightspace = detail::accumulate_moments(
        n, dim, pairs, RngStream(cfg.seed, 1), cfg.threads,
        [&](RngStream& sub) {
          const Matrix s = sample_prior_weightspace_one(cfg.fc, data.x, sub);
          return Vector(Eigen::Map<const Vector>(s.data(), dim));
        });
    const auto cmp = detail::compare_moments(mixture, weightspace);
    results["output_dim"] = dim;
    results["n_samples"] = n;
    results["mixture"] = cmp.moments_a;
    results["weightspace"] = cmp.moments_b;
    results["z_scores"] = cmp.z_scores;
    diagnostics["max_z"] = cmp.max_z;
    diagnostics["samplers_consistent"] = cmp.max_z <= 4.0;
  } else {
    const ConvDataset data =
        load_conv_json(cfg.resolve(cfg.train_path), cfg.conv, false);
    cfg.conv.require_mixture();
    const Eigen::Index dim = data.p();
    const auto pairs = detail::leading_pairs(dim, 10);
    const auto mixture = detail::accumulate_moments(
        n, dim, pairs, RngStream(cfg.seed, 0), cfg.threads,
        [&](RngStream& sub) {
          return sample_prior_conv_mixture_one(cfg.conv, data.x, sub);
        });
    const auto weightspace = detail::accumulate_moments(
        n, dim, pairs, RngStream(cfg.seed, 1), cfg.threads,
        [&](RngStream& sub) {
          return sample_prior_conv_weightspace_one(cfg.conv, data.x, sub);
        });
    const auto cmp = detail::compare_moments(mixture, weightspace);
    results["output_dim"] = dim;
    results["n_samples"] = n;
    results["mixture"] = cmp.moments_a;
    results["weightspace"] = cmp.moments_b;
    results["z_scores"] = cmp.z_scores;
    diagnostics["max_z"] = cmp.max_z;
    diagnostics["samplers_consistent"] = cmp.max_z <= 4.0;
  }

  return make_report("sample-prior", detail::config_echo(cfg),
                     std::move(results), std::move(diagnostics), cfg.seed,
                     cfg.threads, timer.wall_ms());
}

// ---------------------------------------------------------------------------
// predict: posterior predictive mean/covariance per test input
// ---------------------------------------------------------------------------

namespace detail {

// Self-normalized importance-sampling standard error of a weighted mean,
// via the delta method over the retained entries.
inline double weighted_mean_se(const std::vector<std::pair<double, double>>&
                                   weight_value) {
  double max_lw = -std::numeric_limits<double>::infinity();
  for (const auto& p : weight_value) max_lw = std::max(max_lw, p.first);
  double sw = 0.0;
  for (const auto& p : weight_value) sw += std::exp(p.first - max_lw);
  double mean = 0.0;
  for (const auto& p : weight_value)
    mean += std::exp(p.first - max_lw) / sw * p.second;
  double var = 0.0;
  for (const auto& p : weight_value) {
    const double wn = std::exp(p.first - max_lw) / sw;
    var += wn * wn * (p.second - mean) * (p.second - mean);
  }
  return std::sqrt(var);
}

// Brute-force posterior over weight draws: prior weights, Gaussian
// likelihood as the importance weight. Returns batch-mean statistics for
// the predictive first and second moment of each output coordinate.
struct WeightspaceOracle {
  Vector mean;          // predictive mean estimate
  Vector second;        // predictive second moment estimate
  Vector mean_se;       // batch-means standard errors
  Vector second_se;
};

inline WeightspaceOracle fc_weightspace_oracle(const FcNetworkSpec& spec,
                                               const Vector& x0,
                                               const Matrix& x,
                                               const Vector& y, double beta,
                                               std::int64_t n_draws,
                                               const RngStream& rng,
                                               int threads,
                                               int n_batches = 10) {
  Matrix enlarged(spec.n0, x.cols() + 1);
  enlarged.col(0) = x0;
  enlarged.rightCols(x.cols()) = x;
  const Eigen::Index d = spec.d;
  const std::int64_t per_batch = std::max<std::int64_t>(1, n_draws / n_batches);

  struct Batch {
    double w = 0.0;
    Vector m, s;
  };
  std::vector<Batch> batches(static_cast<std::size_t>(n_batches));
  for (auto& b : batches) {
    b.m = Vector::Zero(d);
    b.s = Vector::Zero(d);
  }
  for (int bidx = 0; bidx < n_batches; ++bidx) {
    auto acc = chunked_reduce<Batch>(
        per_batch, threads,
        [&] { return Batch{0.0, Vector::Zero(d), Vector::Zero(d)}; },
        [&](Batch& b, std::int64_t i) {
          RngStream sub = rng.substream(
              static_cast<std::uint64_t>(bidx) *
                  static_cast<std::uint64_t>(per_batch) +
              static_cast<std::uint64_t>(i));
          const auto w = sample_fc_weights(spec, sub);
          const Matrix s = fc_forward(spec, w, enlarged);
          double resid = 0.0;
          for (Eigen::Index mu = 0; mu < x.cols(); ++mu)
            for (Eigen::Index j = 0; j < d; ++j) {
              const double r = s(j, mu + 1) - y[mu * d + j];
              resid += r * r;
            }
          const double wgt = std::exp(-0.5 * beta * resid);
          b.w += wgt;
          for (Eigen::Index j = 0; j < d; ++j) {
            b.m[j] += wgt * s(j, 0);
            b.s[j] += wgt * s(j, 0) * s(j, 0);
          }
        },
        [](Batch& into, const Batch& from) {
          into.w += from.w;
          into.m += from.m;
          into.s += from.s;
        });
    batches[static_cast<std::size_t>(bidx)] = std::move(acc);
  }

  WeightspaceOracle out;
  out.mean = Vector::Zero(d);
  out.second = Vector::Zero(d);
  out.mean_se = Vector::Zero(d);
  out.second_se = Vector::Zero(d);
  const double nb = static_cast<double>(n_batches);
  for (Eigen::Index j = 0; j < d; ++j) {
    std::vector<double> bm, bs;
    for (const auto& b : batches) {
      if (!(b.w > 0.0))
        throw DegenerateWeights(
            "weight-space oracle: a batch collected zero likelihood mass; "
            "increase the draw budget or lower beta");
      bm.push_back(b.m[j] / b.w);
      bs.push_back(b.s[j] / b.w);
    }
    auto stats = [&](const std::vector<double>& v) {
      double mean = 0.0;
      for (const double t : v) mean += t;
      mean /= nb;
      double var = 0.0;
      for (const double t : v) var += (t - mean) * (t - mean);
      var /= (nb - 1.0);
      return std::pair{mean, std::sqrt(var / nb)};
    };
    std::tie(out.mean[j], out.mean_se[j]) = stats(bm);
    std::tie(out.second[j], out.second_se[j]) = stats(bs);
  }
  return out;
}

inline WeightspaceOracle conv_weightspace_oracle(const ConvNetworkSpec& spec,
                                                 const Matrix& x0,
                                                 const std::vector<Matrix>& x,
                                                 const Vector& y, double beta,
                                                 std::int64_t n_draws,
                                                 const RngStream& rng,
                                                 int threads,
                                                 int n_batches = 10) {
  const std::int64_t per_batch = std::max<std::int64_t>(1, n_draws / n_batches);
  struct Batch {
    double w = 0.0, m = 0.0, s = 0.0;
  };
  std::vector<Batch> batches(static_cast<std::size_t>(n_batches));
  for (int bidx = 0; bidx < n_batches; ++bidx) {
    batches[static_cast<std::size_t>(bidx)] = chunked_reduce<Batch>(
        per_batch, threads, [] { return Batch{}; },
        [&](Batch& b, std::int64_t i) {
          RngStream sub = rng.substream(
              static_cast<std::uint64_t>(bidx) *
                  static_cast<std::uint64_t>(per_batch) +
              static_cast<std::uint64_t>(i));
          const ConvWeights w = sample_conv_weights(spec, sub);
          double resid = 0.0;
          for (std::size_t mu = 0; mu < x.size(); ++mu) {
            const double r =
                conv_forward_one(spec, w, x[mu]) - y[static_cast<Eigen::Index>(mu)];
            resid += r * r;
          }
          const double wgt = std::exp(-0.5 * beta * resid);
          const double s0 = conv_forward_one(spec, w, x0);
          b.w += wgt;
          b.m += wgt * s0;
          b.s += wgt * s0 * s0;
        },
        [](Batch& into, const Batch& from) {
          into.w += from.w;
          into.m += from.m;
          into.s += from.s;
        });
  }
  WeightspaceOracle out;
  out.mean = Vector::Zero(1);
  out.second = Vector::Zero(1);
  out.mean_se = Vector::Zero(1);
  out.second_se = Vector::Zero(1);
  std::vector<double> bm, bs;
  for (const auto& b : batches) {
    if (!(b.w > 0.0))
      throw DegenerateWeights(
          "weight-space oracle: a batch collected zero likelihood mass; "
          "increase the draw budget or lower beta");
    bm.push_back(b.m / b.w);
    bs.push_back(b.s / b.w);
  }
  const double nb = static_cast<double>(n_batches);
  auto stats = [&](const std::vector<double>& v) {
    double mean = 0.0;
    for (const double t : v) mean += t;
    mean /= nb;
    double var = 0.0;
    for (const double t : v) var += (t - mean) * (t - mean);
    var /= (nb - 1.0);
    return std::pair{mean, std::sqrt(var / nb)};
  };
  std::tie(out.mean[0], out.mean_se[0]) = stats(bm);
  std::tie(out.second[0], out.second_se[0]) = stats(bs);
  return out;
}

template <class MixT>
Json mixture_diagnostics(const WeightedMixture<MixT>& mix, bool metropolis) {
  Json d;
  if (metropolis) {
    d["acceptance_rate"] = mix.acceptance_rate;
  } else {
    d["ess"] = mix.ess;
    d["log_normalizer"] = mix.log_normalizer;
  }
  d["retained_samples"] = mix.samples.size();
  if (!mix.warnings.empty()) d["warnings"] = mix.warnings;
  return d;
}

// z-scores of the mixture predictive against the weight-space oracle, with
// combined standard errors from both sides.
template <class MixT>
Json oracle_comparison(const PredictiveMixture<MixT>& pred,
                       const WeightspaceOracle& oracle, bool metropolis) {
  Json out;
  const Eigen::Index d = pred.mean.size();
  Json mz = Json::array(), sz = Json::array();
  double max_z = 0.0;
  for (Eigen::Index j = 0; j < d; ++j) {
    std::vector<std::pair<double, double>> wm, ws;
    for (const auto& e : pred.mixture.samples) {
      if (!e.moments) continue;
      const double lw = metropolis ? 0.0 : e.log_weight;
      wm.emplace_back(lw, e.moments->mean[j]);
      ws.emplace_back(lw, e.moments->cov(j, j) +
                              e.moments->mean[j] * e.moments->mean[j]);
    }
    const double se_m = weighted_mean_se(wm);
    const double se_s = weighted_mean_se(ws);
    const double second = pred.cov(j, j) + pred.mean[j] * pred.mean[j];
    const double zm =
        std::abs(pred.mean[j] - oracle.mean[j]) /
        std::sqrt(se_m * se_m + oracle.mean_se[j] * oracle.mean_se[j]);
    const double zs =
        std::abs(second - oracle.second[j]) /
        std::sqrt(se_s * se_s + oracle.second_se[j] * oracle.second_se[j]);
    mz.push_back(zm);
    sz.push_back(zs);
    max_z = std::max({max_z, zm, zs});
  }
  out["mean"] = to_json(oracle.mean);
  out["second_moment"] = to_json(oracle.second);
  out["mean_se"] = to_json(oracle.mean_se);
  out["second_moment_se"] = to_json(oracle.second_se);
  out["z_mean"] = mz;
  out["z_second_moment"] = sz;
  out["max_z"] = max_z;
  return out;
}

}  // namespace detail

inline Json cmd_predict(const RunConfig& cfg, bool oracle = false,
                        std::int64_t oracle_draws = 1000000) {
  ReportTimer timer;
  Json results, diagnostics;
  const bool metropolis = cfg.sampler == "metropolis";
  const auto sampler = metropolis ? PosteriorSampler::metropolis
                                  : PosteriorSampler::importance;
  const std::int64_t n = metropolis ? cfg.n_steps : cfg.n_samples;
  Json predictions = Json::array();
  Json per_point = Json::array();

  if (cfg.kind == ArchitectureKind::fc) {
    const FcDataset train =
        load_fc_csv(cfg.resolve(cfg.train_path), cfg.fc, true);
    train.validate(cfg.fc);
    const FcDataset test =
        load_fc_csv(cfg.resolve(cfg.test_path), cfg.fc, false);
    for (Eigen::Index mu = 0; mu < test.x.cols(); ++mu) {
      const Vector x0 = test.x.col(mu);
      const auto pred = predictive_mixture(
          cfg.fc, x0, train.x, train.y, cfg.beta, sampler, n,
          RngStream(cfg.seed, 2 + static_cast<std::uint64_t>(mu)),
          cfg.step_size, cfg.threads);
      Json p;
      p["input"] = to_json(x0);
      p["mean"] = to_json(pred.mean);
      p["cov"] = to_json(pred.cov.matrix());
      if (oracle) {
        const auto orc = detail::fc_weightspace_oracle(
            cfg.fc, x0, train.x, train.y, cfg.beta, oracle_draws,
            RngStream(cfg.seed, 1000 + static_cast<std::uint64_t>(mu)),
            cfg.threads);
        p["oracle"] = detail::oracle_comparison(pred, orc, metropolis);
      }
      predictions.push_back(std::move(p));
      per_point.push_back(detail::mixture_diagnostics(pred.mixture,
                                                      metropolis));
    }
  } else {
    const ConvDataset train =
        load_conv_json(cfg.resolve(cfg.train_path), cfg.conv, true);
    train.validate(cfg.conv);
    const ConvDataset test =
        load_conv_json(cfg.resolve(cfg.test_path), cfg.conv, false);
    for (std::size_t mu = 0; mu < test.x.size(); ++mu) {
      const Matrix& x0 = test.x[mu];
      const auto pred = predictive_mixture(
          cfg.conv, x0, train.x, train.y, cfg.beta, sampler, n,
          RngStream(cfg.seed, 2 + static_cast<std::uint64_t>(mu)),
          cfg.step_size, cfg.threads);
      Json p;
      p["input"] = to_json(x0);
      p["mean"] = to_json(pred.mean);
      p["cov"] = to_json(pred.cov.matrix());
      if (oracle) {
        const auto orc = detail::conv_weightspace_oracle(
            cfg.conv, x0, train.x, train.y, cfg.beta, oracle_draws,
            RngStream(cfg.seed, 1000 + static_cast<std::uint64_t>(mu)),
            cfg.threads);
        p["oracle"] = detail::oracle_comparison(pred, orc, metropolis);
      }
      predictions.push_back(std::move(p));
      per_point.push_back(detail::mixture_diagnostics(pred.mixture,
                                                      metropolis));
    }
  }

  results["predictions"] = std::move(predictions);
  results["sampler"] = cfg.sampler;
  diagnostics["per_point"] = std::move(per_point);
  return make_report("predict", detail::config_echo(cfg), std::move(results),
                     std::move(diagnostics), cfg.seed, cfg.threads,
                     timer.wall_ms());
}

// ---------------------------------------------------------------------------
// evidence: Bayesian evidence with cross-method consistency gaps
// ---------------------------------------------------------------------------

namespace detail {

inline EvidenceMethod evidence_method_from_name(const std::string& name) {
  if (name == "bessel") return EvidenceMethod::bessel_closed_form;
  if (name == "log-convolution") return EvidenceMethod::log_convolution;
  if (name == "monte-carlo") return EvidenceMethod::monte_carlo;
  if (name == "quadrature") return EvidenceMethod::quadrature;
  throw ConfigError("unknown evidence method: " + name);
}

inline Json evidence_json(const EvidenceResult& r) {
  Json j;
  j["method"] = to_string(r.method);
  j["log_evidence"] = r.log_value;
  j["error_estimate"] = r.error_estimate;
  if (!r.warnings.empty()) j["warnings"] = r.warnings;
  return j;
}

}  // namespace detail

inline Json cmd_evidence(const RunConfig& cfg) {
  ReportTimer timer;
  Json results, diagnostics;
  const FcDataset train =
      load_fc_csv(cfg.resolve(cfg.train_path), cfg.fc, true);
  train.validate(cfg.fc);
  const bool zero_temp = cfg.evidence.mode == "zero-temperature";

  auto evaluate = [&](const std::string& name,
                      std::uint64_t stream) -> EvidenceResult {
    const EvidenceMethod method = detail::evidence_method_from_name(name);
    if (zero_temp)
      return evidence_zero_temperature(cfg.fc, train.x, train.y, method,
                                       cfg.evidence.mc_draws,
                                       RngStream(cfg.seed, stream),
                                       cfg.threads);
    return evidence_finite_beta(cfg.fc, train.x, train.y, cfg.beta, method,
                                cfg.evidence.mc_draws,
                                RngStream(cfg.seed, stream), cfg.threads);
  };

  const EvidenceResult primary = evaluate(cfg.evidence.method, 4);
  results["mode"] = cfg.evidence.mode;
  results["evidence"] = detail::evidence_json(primary);
  std::vector<std::string> warnings = primary.warnings;

  if (zero_temp) {
    results["omega"] = omega(train.x, train.y, cfg.fc).omega;
  } else {
    results["beta"] = cfg.beta;
    // Rescaling that stays finite as beta -> infinity; comparable with the
    // zero-temperature value.
    results["rescaled_log_evidence"] =
        primary.log_value +
        0.5 * static_cast<double>(train.x.cols()) * std::log(cfg.beta);
  }

  if (!cfg.evidence.compare.empty()) {
    const EvidenceResult other = evaluate(cfg.evidence.compare, 5);
    Json cmp = detail::evidence_json(other);
    const double gap = std::abs(primary.log_value - other.log_value);
    cmp["gap"] = gap;
    // |log a - log b| is the relative disagreement of the evidences
    // themselves to first order.
    cmp["gap_relative"] = gap;
    cmp["gap_within_errors"] =
        gap <= 4.0 * (primary.error_estimate + other.error_estimate) + 1e-12;
    results["compare"] = std::move(cmp);
    for (const auto& w : other.warnings) warnings.push_back(w);
  }

  diagnostics["error_estimate"] = primary.error_estimate;
  if (!warnings.empty()) diagnostics["warnings"] = warnings;
  return make_report("evidence", detail::config_echo(cfg), std::move(results),
                     std::move(diagnostics), cfg.seed, cfg.threads,
                     timer.wall_ms());
}

// ---------------------------------------------------------------------------
// ldp: rate-function minimization and concentration diagnostics
// ---------------------------------------------------------------------------

inline Json cmd_ldp(const RunConfig& cfg) {
  ReportTimer timer;
  Json results, diagnostics;
  const bool meanfield = cfg.ldp.objective == "meanfield";
  const RateObjective objective =
      meanfield ? RateObjective::meanfield : RateObjective::lazy;

  FcDataset train;
  if (meanfield) {
    train = load_fc_csv(cfg.resolve(cfg.train_path), cfg.fc, true);
    train.validate(cfg.fc);
  }

  MinimizeOptions options;
  options.max_iterations = static_cast<int>(cfg.ldp.max_iterations);
  options.gradient_tolerance = cfg.ldp.gradient_tolerance;
  const RatePoint point =
      minimize_rate(objective, cfg.fc, train.x, train.y,
                    cfg.beta_set ? cfg.beta : 1.0, {}, options);

  Json minimizer = Json::array();
  double identity_distance = 0.0;
  for (const SpdMatrix& q : point.qs) {
    minimizer.push_back(to_json(q.matrix()));
    identity_distance = std::max(
        identity_distance,
        (q.matrix() - Matrix::Identity(q.dim(), q.dim())).norm());
  }
  results["objective"] = cfg.ldp.objective;
  results["minimizer"] = std::move(minimizer);
  results["value"] = point.value;
  results["gradient_norm"] = point.gradient_norm;
  results["iterations"] = point.iterations;
  results["converged"] = point.converged;
  results["identity_distance"] = identity_distance;
  if (!point.diagnostic.empty()) diagnostics["minimizer"] = point.diagnostic;

  const auto regime = meanfield ? ConcentrationRegime::meanfield
                                : ConcentrationRegime::lazy;
  const auto rows = concentration_probe(
      cfg.fc, regime, cfg.ldp.ladder, cfg.ldp.probe_draws,
      RngStream(cfg.seed, 6), train.x, train.y,
      cfg.beta_set ? cfg.beta : 1.0, cfg.threads);
  Json widths = Json::array(), dists = Json::array();
  for (const auto& r : rows) {
    widths.push_back(r.width);
    dists.push_back(r.mean_distance);
  }
  const double slope = log_log_slope(rows);
  results["concentration"] = {{"widths", widths},
                              {"mean_distances", dists},
                              {"log_log_slope", slope}};
  diagnostics["slope_matches_clt_rate"] = std::abs(slope + 0.5) <= 0.1;

  // Scalar saddle-point cross-check where it applies: one output, equal
  // widths, data and temperature available.
  const bool equal_widths =
      std::all_of(cfg.fc.widths.begin(), cfg.fc.widths.end(),
                  [&](int w) { return w == cfg.fc.widths.front(); });
  if (cfg.fc.d == 1 && equal_widths && meanfield && cfg.beta_set) {
    const double alpha = static_cast<double>(train.x.cols()) /
                         static_cast<double>(cfg.fc.widths.front());
    Json points = Json::array();
    for (const double b : {cfg.beta, 10.0 * cfg.beta, 100.0 * cfg.beta}) {
      const SaddleScalar s =
          saddle_scalar_solve(cfg.fc, train.x, train.y, alpha, b);
      points.push_back({{"beta", b}, {"u0", s.u0}, {"residual", s.residual}});
    }
    results["saddle"] = {{"alpha", alpha}, {"points", std::move(points)}};
  } else if (meanfield) {
    diagnostics["saddle"] =
        "not applicable: needs output_dim = 1 and equal widths";
  }

  return make_report("ldp", detail::config_echo(cfg), std::move(results),
                     std::move(diagnostics), cfg.seed, cfg.threads,
                     timer.wall_ms());
}

// Dispatch for the computing subcommands (verify is handled by the driver).
inline Json run_command(const RunConfig& cfg, bool oracle = false) {
  switch (cfg.command) {
    case Command::sample_prior: return cmd_sample_prior(cfg);
    case Command::predict: return cmd_predict(cfg, oracle);
    case Command::evidence: return cmd_evidence(cfg);
    case Command::ldp: return cmd_ldp(cfg);
    case Command::verify: break;
  }
  throw ConfigError("run_command: verify is not dispatched here");
}

}  // namespace dlnk
