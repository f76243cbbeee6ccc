#pragma once

// Command-line driver:
//
//   dlnk <sample-prior|predict|evidence|ldp|verify>
//        --config <path> [--seed <u64>] [--threads <n>] [--out <path>]
//        [--oracle]
//
// Flags override the corresponding config values. Exit codes:
//   0  success
//   2  configuration error (bad flags, bad config file, invalid values)
//   3  data error (missing/malformed dataset, shape mismatches)
//   4  numeric failure (rank-deficient design, degenerate weights, ...)
//   5  verification failure (a self-check criterion did not pass)
//
// Every failure prints exactly one structured JSON diagnostic line to
// stderr: {"error": <type>, "message": <what>, "hint": <remediation>}.

#include <charconv>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "dlnk/commands.hpp"
#include "dlnk/config.hpp"
#include "dlnk/report.hpp"
#include "dlnk/verify.hpp"

namespace dlnk::cli {

struct ParsedArgs {
  Command command = Command::verify;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string out_path;
  bool oracle = false;
};

inline const char* kUsage =
    "usage: dlnk <sample-prior|predict|evidence|ldp|verify> --config <path>\n"
    "            [--seed <u64>] [--threads <n>] [--out <path>] [--oracle]\n";

namespace detail {

struct Diagnostic {
  int exit_code = 4;
  std::string type;
  std::string hint;
};

inline Diagnostic classify(const Error& e, bool config_phase) {
  if (dynamic_cast<const ConfigError*>(&e))
    return {2, "ConfigError", "fix the configuration (see message)"};
  if (dynamic_cast<const ParseError*>(&e))
    return {config_phase ? 2 : 3, "ParseError",
            "fix the file syntax at the reported line:column"};
  if (dynamic_cast<const ShapeMismatch*>(&e))
    return {config_phase ? 2 : 3, "ShapeMismatch",
            "make the dataset shapes match the architecture"};
  if (dynamic_cast<const RankDeficientDesign*>(&e))
    return {4, "RankDeficientDesign",
            "remove duplicate or collinear inputs from the enlarged design"};
  if (dynamic_cast<const DegenerateWeights*>(&e))
    return {4, "DegenerateWeights",
            "increase n_samples, lower beta, or switch to the metropolis "
            "sampler"};
  if (dynamic_cast<const NotPositiveDefinite*>(&e))
    return {4, "NotPositiveDefinite", "check conditioning of the inputs"};
  if (dynamic_cast<const DofTooSmall*>(&e))
    return {4, "DofTooSmall",
            "the mixture form needs every hidden width/channel count above "
            "the output/spatial dimension"};
  if (dynamic_cast<const SingularGram*>(&e))
    return {4, "SingularGram",
            "the training gram must be invertible here; drop redundant "
            "examples"};
  if (dynamic_cast<const MethodCostExceeded*>(&e))
    return {4, "MethodCostExceeded", "switch to the monte-carlo method"};
  if (dynamic_cast<const IntegrableSingularity*>(&e))
    return {4, "IntegrableSingularity",
            "zero labels with too many examples; use finite beta or fewer "
            "examples"};
  if (dynamic_cast<const NoInteriorMinimum*>(&e))
    return {4, "NoInteriorMinimum",
            "the saddle equation has no interior root for these parameters"};
  if (dynamic_cast<const NonFiniteObjective*>(&e))
    return {4, "NonFiniteObjective",
            "an objective or weight overflowed; rescale the instance"};
  if (dynamic_cast<const EigenvalueViolation*>(&e))
    return {4, "EigenvalueViolation",
            "a spectrum precondition failed; shrink the test matrix"};
  if (dynamic_cast<const ConvergenceFailure*>(&e))
    return {4, "ConvergenceFailure",
            "raise the iteration budget or loosen the tolerance"};
  return {4, "Error", ""};
}

inline void emit_diagnostic(std::ostream& err, const std::string& type,
                            const std::string& message,
                            const std::string& hint) {
  Json d;
  d["error"] = type;
  d["message"] = message;
  if (!hint.empty()) d["hint"] = hint;
  err << d.dump() << std::endl;
}

inline bool parse_u64_flag(const std::string& text, std::uint64_t& out) {
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

inline bool parse_int_flag(const std::string& text, int& out) {
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace detail

// Throws ConfigError on any malformed invocation.
inline ParsedArgs parse_args(const std::vector<std::string>& args) {
  if (args.empty()) throw ConfigError(std::string("missing subcommand\n") + kUsage);
  ParsedArgs parsed;
  const std::string& sub = args[0];
  if (sub == "sample-prior") parsed.command = Command::sample_prior;
  else if (sub == "predict") parsed.command = Command::predict;
  else if (sub == "evidence") parsed.command = Command::evidence;
  else if (sub == "ldp") parsed.command = Command::ldp;
  else if (sub == "verify") parsed.command = Command::verify;
  else
    throw ConfigError("unknown subcommand `" + sub + "`\n" + kUsage);

  for (std::size_t i = 1; i < args.size(); ++i) {
    const std::string& a = args[i];
    auto value = [&]() -> const std::string& {
      if (i + 1 >= args.size())
        throw ConfigError("flag " + a + " needs a value\n" + kUsage);
      return args[++i];
    };
    if (a == "--config") {
      parsed.config_path = value();
    } else if (a == "--seed") {
      std::uint64_t s = 0;
      if (!detail::parse_u64_flag(value(), s))
        throw ConfigError("--seed needs an unsigned integer");
      parsed.seed = s;
    } else if (a == "--threads") {
      int t = 0;
      if (!detail::parse_int_flag(value(), t) || t < 0)
        throw ConfigError("--threads needs a nonnegative integer");
      parsed.threads = t;
    } else if (a == "--out") {
      parsed.out_path = value();
    } else if (a == "--oracle") {
      parsed.oracle = true;
    } else {
      throw ConfigError("unknown flag `" + a + "`\n" + kUsage);
    }
  }
  if (parsed.config_path.empty())
    throw ConfigError(std::string("--config is required\n") + kUsage);
  if (parsed.oracle && parsed.command != Command::predict)
    throw ConfigError("--oracle only applies to the predict subcommand");
  return parsed;
}

inline int run_verify(const RunConfig& cfg, const std::string& out_path,
                      std::ostream& out, std::ostream& err) {
  const auto results = run_acceptance_suite(cfg.threads);
  std::size_t width = 0;
  for (const auto& r : results) width = std::max(width, r.name.size());
  bool all_pass = true;
  for (const auto& r : results) {
    out << (r.pass ? "PASS  " : "FAIL  ") << r.name
        << std::string(width - r.name.size() + 2, ' ') << r.details << '\n';
    all_pass = all_pass && r.pass;
  }
  out << (all_pass ? "all criteria passed\n" : "some criteria FAILED\n");

  if (!out_path.empty()) {
    ReportTimer timer;
    Json criteria = Json::array();
    for (const auto& r : results)
      criteria.push_back(
          {{"name", r.name}, {"pass", r.pass}, {"details", r.details}});
    Json report = make_report(
        "verify", dlnk::detail::config_echo(cfg),
        {{"criteria", std::move(criteria)}, {"all_pass", all_pass}},
        Json::object(), cfg.seed, cfg.threads, timer.wall_ms());
    write_report(report, out_path, out);
  }
  if (!all_pass) {
    detail::emit_diagnostic(err, "VerificationFailure",
                            "one or more self-check criteria failed",
                            "see the pass/fail table on stdout");
    return 5;
  }
  return 0;
}

inline int run(const std::vector<std::string>& args, std::ostream& out,
               std::ostream& err) {
  ParsedArgs parsed;
  RunConfig cfg;
  try {
    parsed = parse_args(args);
    cfg = load_run_config(parsed.config_path, parsed.command);
    if (parsed.seed) cfg.seed = *parsed.seed;
    if (parsed.threads) cfg.threads = *parsed.threads;
  } catch (const Error& e) {
    const auto d = detail::classify(e, true);
    detail::emit_diagnostic(err, d.type, e.what(), d.hint);
    return 2;
  }

  try {
    if (parsed.command == Command::verify)
      return run_verify(cfg, parsed.out_path, out, err);
    const Json report = run_command(cfg, parsed.oracle);
    write_report(report, parsed.out_path, out);
    return 0;
  } catch (const Error& e) {
    const auto d = detail::classify(e, false);
    detail::emit_diagnostic(err, d.type, e.what(), d.hint);
    return d.exit_code;
  } catch (const std::exception& e) {
    detail::emit_diagnostic(err, "UnexpectedError", e.what(), "");
    return 4;
  }
}

inline int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace dlnk::cli
