#include "lab/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <utility>

#include "CLI11.hpp"
#include "json.hpp"

#include "lab/control.hpp"
#include "lab/design.hpp"
#include "lab/errors.hpp"
#include "lab/fisher.hpp"
#include "lab/kinematics.hpp"
#include "lab/matrix.hpp"
#include "lab/numerics.hpp"
#include "lab/rng.hpp"

namespace lab::cli {

namespace {

using numerics::format_real;
using numerics::Matrix;
using numerics::SeededRng;
using numerics::Vec;

constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Deterministic JSON writer (artifact side).  The vendor parser is used only
// for reading custom problem files; everything we emit goes through this
// writer so numeric formatting and key order are pinned down.
// ---------------------------------------------------------------------------

struct JsonValue {
  enum class Kind { Null, Bool, Number, Raw, String, Array, Object };
  Kind kind = Kind::Null;
  bool flag = false;
  double num = 0.0;
  std::string text;  // Raw literal or String payload
  std::vector<JsonValue> items;
  std::vector<std::pair<std::string, JsonValue>> members;

  static JsonValue null() { return {}; }
  static JsonValue boolean(bool v) {
    JsonValue j;
    j.kind = Kind::Bool;
    j.flag = v;
    return j;
  }
  static JsonValue number(double v) {
    JsonValue j;
    j.kind = Kind::Number;
    j.num = v;
    return j;
  }
  static JsonValue raw(std::string literal) {
    JsonValue j;
    j.kind = Kind::Raw;
    j.text = std::move(literal);
    return j;
  }
  static JsonValue str(std::string s) {
    JsonValue j;
    j.kind = Kind::String;
    j.text = std::move(s);
    return j;
  }
  static JsonValue array() {
    JsonValue j;
    j.kind = Kind::Array;
    return j;
  }
  static JsonValue object() {
    JsonValue j;
    j.kind = Kind::Object;
    return j;
  }

  JsonValue& add(std::string key, JsonValue v) {
    members.emplace_back(std::move(key), std::move(v));
    return *this;
  }
  JsonValue& push(JsonValue v) {
    items.push_back(std::move(v));
    return *this;
  }
};

std::string escape_json(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 2);
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out;
}

void render_json(const JsonValue& v, std::string& out, int depth) {
  const std::string pad(static_cast<std::size_t>(depth) * 2, ' ');
  const std::string pad_in(static_cast<std::size_t>(depth + 1) * 2, ' ');
  switch (v.kind) {
    case JsonValue::Kind::Null: out += "null"; break;
    case JsonValue::Kind::Bool: out += v.flag ? "true" : "false"; break;
    case JsonValue::Kind::Number: out += format_real(v.num); break;
    case JsonValue::Kind::Raw: out += v.text; break;
    case JsonValue::Kind::String:
      out += '"';
      out += escape_json(v.text);
      out += '"';
      break;
    case JsonValue::Kind::Array: {
      if (v.items.empty()) {
        out += "[]";
        break;
      }
      // Arrays of scalars stay on one line; arrays holding containers nest.
      bool scalar = true;
      for (const JsonValue& item : v.items)
        if (item.kind == JsonValue::Kind::Array || item.kind == JsonValue::Kind::Object)
          scalar = false;
      out += '[';
      for (std::size_t i = 0; i < v.items.size(); ++i) {
        if (!scalar) {
          out += '\n';
          out += pad_in;
        }
        render_json(v.items[i], out, depth + 1);
        if (i + 1 < v.items.size()) out += scalar ? ", " : ",";
      }
      if (!scalar) {
        out += '\n';
        out += pad;
      }
      out += ']';
      break;
    }
    case JsonValue::Kind::Object: {
      if (v.members.empty()) {
        out += "{}";
        break;
      }
      out += "{\n";
      for (std::size_t i = 0; i < v.members.size(); ++i) {
        out += pad_in;
        out += '"';
        out += escape_json(v.members[i].first);
        out += "\": ";
        render_json(v.members[i].second, out, depth + 1);
        if (i + 1 < v.members.size()) out += ',';
        out += '\n';
      }
      out += pad;
      out += '}';
      break;
    }
  }
}

std::string to_text(const JsonValue& v) {
  std::string out;
  render_json(v, out, 0);
  out += '\n';
  return out;
}

JsonValue json_vec(const Vec& v) {
  JsonValue arr = JsonValue::array();
  for (double x : v) arr.push(JsonValue::number(x));
  return arr;
}

JsonValue json_matrix(const Matrix& m) {
  JsonValue rows = JsonValue::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    JsonValue row = JsonValue::array();
    for (std::size_t c = 0; c < m.cols(); ++c) row.push(JsonValue::number(m(r, c)));
    rows.push(std::move(row));
  }
  return rows;
}

// Flatten a report into "key,value" CSV lines for --format csv.
void flatten_csv(const JsonValue& v, const std::string& prefix, std::string& out) {
  switch (v.kind) {
    case JsonValue::Kind::Object:
      for (const auto& [key, val] : v.members)
        flatten_csv(val, prefix.empty() ? key : prefix + "." + key, out);
      break;
    case JsonValue::Kind::Array:
      for (std::size_t i = 0; i < v.items.size(); ++i)
        flatten_csv(v.items[i], prefix + "[" + std::to_string(i) + "]", out);
      break;
    case JsonValue::Kind::Null: out += prefix + ",\n"; break;
    case JsonValue::Kind::Bool: out += prefix + "," + (v.flag ? "true" : "false") + "\n"; break;
    case JsonValue::Kind::Number: out += prefix + "," + format_real(v.num) + "\n"; break;
    case JsonValue::Kind::Raw:
    case JsonValue::Kind::String: out += prefix + "," + v.text + "\n"; break;
  }
}

// ---------------------------------------------------------------------------
// Tabular artifacts (kinematics curve, fisher trace)
// ---------------------------------------------------------------------------

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;  // pre-formatted cells, "" = absent
};

std::string table_csv(const Table& t) {
  std::string out;
  for (std::size_t c = 0; c < t.columns.size(); ++c) {
    out += t.columns[c];
    out += c + 1 < t.columns.size() ? "," : "";
  }
  out += '\n';
  for (const auto& row : t.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out += row[c];
      out += c + 1 < row.size() ? "," : "";
    }
    out += '\n';
  }
  return out;
}

std::string table_json(const Table& t) {
  JsonValue root = JsonValue::object();
  JsonValue cols = JsonValue::array();
  for (const auto& c : t.columns) cols.push(JsonValue::str(c));
  root.add("columns", std::move(cols));
  JsonValue rows = JsonValue::array();
  for (const auto& row : t.rows) {
    JsonValue jrow = JsonValue::array();
    for (const auto& cell : row)
      jrow.push(cell.empty() ? JsonValue::null() : JsonValue::raw(cell));
    rows.push(std::move(jrow));
  }
  root.add("rows", std::move(rows));
  return to_text(root);
}

// ---------------------------------------------------------------------------
// Config canonicalization and hashing
// ---------------------------------------------------------------------------

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

// The output path is deliberately excluded: it says where the artifact goes,
// not what it contains, and reruns into different files must stay
// byte-identical.
std::string canonical_config(const RunConfig& config) {
  std::string out = config.subcommand;
  out += '\n';
  out += "format=" + config.format + "\n";
  out += "seed=" + std::to_string(config.seed) + "\n";
  for (const auto& [key, value] : config.params) out += key + "=" + value + "\n";
  return out;
}

std::string manifest_hash(const RunConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical_config(config))));
  return std::string(buf);
}

// ---------------------------------------------------------------------------
// Argument parsing
// ---------------------------------------------------------------------------

namespace {

void require_usage(bool cond, const std::string& message) {
  if (!cond) fail(ErrorKind::UsageError, message);
}

double parse_real_strict(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    fail(ErrorKind::UsageError, what + ": cannot parse '" + text + "' as a real number");
  }
  require_usage(used == text.size(), what + ": trailing characters in '" + text + "'");
  require_usage(std::isfinite(value), what + ": value must be finite");
  return value;
}

Vec parse_real_list(const std::string& text, const std::string& what) {
  Vec values;
  std::string token;
  std::istringstream stream(text);
  while (std::getline(stream, token, ','))
    values.push_back(parse_real_strict(token, what));
  require_usage(!values.empty(), what + ": empty list");
  return values;
}

std::string join_reals(const Vec& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out += format_real(v[i]);
    if (i + 1 < v.size()) out += ',';
  }
  return out;
}

/// key=value lines (blank lines and #-comments allowed) from --config FILE,
/// rendered back into --key=value tokens.
std::vector<std::string> config_file_tokens(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::UsageError, "cannot open config file '" + path + "'");
  std::vector<std::string> tokens;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    std::string trimmed = line.substr(first, last - first + 1);
    if (trimmed[0] == '#') continue;
    const auto eq = trimmed.find('=');
    require_usage(eq != std::string::npos && eq > 0,
                  path + ":" + std::to_string(lineno) + ": expected key=value");
    const std::string key = trimmed.substr(0, eq);
    require_usage(key != "config", path + ": config files cannot nest");
    tokens.push_back("--" + trimmed);
  }
  return tokens;
}

/// Splices config-file tokens in right after the subcommand so that explicit
/// command-line flags override them under the take-last policy.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::string path;
  std::size_t sub_end = 0;  // index one past the subcommand token(s)
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& tok = args[i];
    if (tok == "--config" && i + 1 < args.size()) path = args[i + 1];
    else if (tok.rfind("--config=", 0) == 0) path = tok.substr(9);
    if (sub_end == 0 && !tok.empty() && tok[0] != '-') {
      sub_end = i + 1;
      if (tok == "fisher" && i + 1 < args.size() && args[i + 1] == "cramer-rao") ++sub_end;
    }
  }
  if (path.empty() || sub_end == 0) return args;
  std::vector<std::string> merged(args.begin(), args.begin() + sub_end);
  const std::vector<std::string> injected = config_file_tokens(path);
  merged.insert(merged.end(), injected.begin(), injected.end());
  merged.insert(merged.end(), args.begin() + sub_end, args.end());
  return merged;
}

struct CommonFlags {
  std::uint64_t seed = 0;
  std::string out;
  std::string format;
  std::string config_path;
};

void add_common(CLI::App* sub, CommonFlags& flags) {
  sub->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  sub->add_option("--seed", flags.seed, "Run seed (default 0)");
  sub->add_option("--out", flags.out, "Artifact path (stdout when omitted)");
  sub->add_option("--format", flags.format, "Artifact format")
      ->check(CLI::IsMember({"csv", "json"}));
  sub->add_option("--config", flags.config_path,
                  "key=value file merged beneath explicit flags");
}

}  // namespace

RunConfig parse_args(const std::vector<std::string>& args) {
  const std::vector<std::string> expanded = expand_config(args);

  CLI::App app{"Numerical laboratory: token-stream kinematics, experimental design, "
               "discrete optimal control, and Fisher-preconditioned estimation"};
  app.name("lab");
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);

  // kinematics ------------------------------------------------------------
  CommonFlags kin_common;
  std::string kin_corpus;
  std::int64_t kin_order = 2;
  double kin_smoothing = 1.0;
  std::int64_t kin_horizon = 0;
  std::string kin_corpus_format = "bytes";
  bool kin_bits = false;
  CLI::App* kin = app.add_subcommand("kinematics", "Per-token surprisal curve of a corpus");
  add_common(kin, kin_common);
  kin->add_option("--corpus", kin_corpus, "Input corpus file")->required();
  kin->add_option("--order", kin_order, "Context length of the fitted model (>= 1)");
  kin->add_option("--smoothing", kin_smoothing, "Additive smoothing mass (> 0)");
  kin->add_option("--horizon", kin_horizon, "Cap on emitted rows (0 = all)");
  kin->add_option("--corpus-format", kin_corpus_format, "Corpus encoding")
      ->check(CLI::IsMember({"bytes", "ints"}));
  kin->add_flag("--bits", kin_bits, "Report bits instead of nats");

  // design ----------------------------------------------------------------
  CommonFlags des_common;
  std::int64_t des_p = 0;
  std::int64_t des_n = 0;
  double des_sigma2 = 1.0;
  std::string des_mode = "optimal";
  std::int64_t des_reps = 0;
  CLI::App* des = app.add_subcommand("design", "Experimental-design error analysis");
  add_common(des, des_common);
  des->add_option("--p", des_p, "Covariate dimension")->required();
  des->add_option("--n", des_n, "Design rows")->required();
  des->add_option("--sigma2", des_sigma2, "Noise variance (> 0)");
  des->add_option("--mode", des_mode, "Design construction")
      ->check(CLI::IsMember({"optimal", "random"}));
  des->add_option("--mc-replicates", des_reps, "Monte-Carlo replicates (0 = skip)");

  // control ---------------------------------------------------------------
  CommonFlags ctl_common;
  std::string ctl_problem = "lqr";
  std::int64_t ctl_horizon = 8;
  double ctl_discount = 0.9;
  double ctl_tol = 1e-8;
  std::int64_t ctl_max_iters = 500;
  CLI::App* ctl = app.add_subcommand("control", "Costate solver against dynamic programming");
  add_common(ctl, ctl_common);
  ctl->add_option("--problem", ctl_problem, "lqr, gridworld, or a problem file");
  ctl->add_option("--horizon", ctl_horizon, "Steps for the built-in regulator (>= 1)");
  ctl->add_option("--discount", ctl_discount, "Discount for the built-in gridworld [0,1)");
  ctl->add_option("--tol", ctl_tol, "Solver tolerance (> 0)");
  ctl->add_option("--max-iters", ctl_max_iters, "Sweep iteration cap (>= 1)");

  // fisher ----------------------------------------------------------------
  CommonFlags fsh_common;
  std::string fsh_model = "bernoulli";
  std::string fsh_algo = "adam";
  double fsh_alpha = 0.02, fsh_beta1 = 0.9, fsh_beta2 = 0.999, fsh_eps = 1e-8;
  double fsh_ridge = 1e-8, fsh_decay = 0.9995, fsh_grad_tol = 1e-6;
  std::int64_t fsh_steps = 30000, fsh_n = 400;
  std::string fsh_theta_star, fsh_theta0;
  CLI::App* fsh = app.add_subcommand("fisher", "Likelihood optimization trace");
  add_common(fsh, fsh_common);
  fsh->add_option("--model", fsh_model, "Model family")
      ->check(CLI::IsMember({"bernoulli", "gauss-mean", "categorical", "logistic"}));
  fsh->add_option("--algo", fsh_algo, "Optimizer")
      ->check(CLI::IsMember({"flow", "adam", "rmsprop", "sgd"}));
  fsh->add_option("--alpha", fsh_alpha, "Step size (> 0)");
  fsh->add_option("--beta1", fsh_beta1, "First-moment decay, open (0,1)");
  fsh->add_option("--beta2", fsh_beta2, "Second-moment decay, open (0,1)");
  fsh->add_option("--eps", fsh_eps, "Denominator floor (>= 0)");
  fsh->add_option("--ridge", fsh_ridge, "Fisher ridge (>= 0)");
  fsh->add_option("--decay", fsh_decay, "Per-step alpha multiplier, (0,1]");
  fsh->add_option("--grad-tol", fsh_grad_tol, "Stationarity tolerance (> 0)");
  fsh->add_option("--steps", fsh_steps, "Update cap (>= 1)");
  fsh->add_option("--n", fsh_n, "Observations drawn at theta-star (>= 1)");
  fsh->add_option("--theta-star", fsh_theta_star, "True parameter, comma separated");
  fsh->add_option("--theta0", fsh_theta0, "Starting point, comma separated");

  // fisher cramer-rao -----------------------------------------------------
  CommonFlags crs_common;
  std::string crs_model = "bernoulli";
  std::string crs_algo = "flow";
  std::string crs_theta_star;
  std::int64_t crs_n = 400, crs_replicates = 500;
  CLI::App* crs = fsh->add_subcommand("cramer-rao", "Replicated estimator-variance study");
  add_common(crs, crs_common);
  crs->add_option("--model", crs_model, "Model family")
      ->check(CLI::IsMember({"bernoulli", "gauss-mean", "categorical", "logistic"}));
  crs->add_option("--algo", crs_algo, "Optimizer for the replicate fits")
      ->check(CLI::IsMember({"flow", "adam", "rmsprop", "sgd"}));
  crs->add_option("--theta-star", crs_theta_star, "True parameter, comma separated");
  crs->add_option("--n", crs_n, "Observations per replicate (>= 1)");
  crs->add_option("--replicates", crs_replicates, "Replicates (>= 100 for a usable study)");

  std::vector<std::string> reversed(expanded.rbegin(), expanded.rend());
  try {
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    RunConfig help;
    help.subcommand = "help";
    return help;
  } catch (const CLI::ParseError& e) {
    fail(ErrorKind::UsageError, e.what());
  }

  RunConfig cfg;
  auto finish_common = [&cfg](const CommonFlags& flags, const std::string& default_format) {
    cfg.seed = flags.seed;
    cfg.out = flags.out;
    cfg.format = flags.format.empty() ? default_format : flags.format;
  };

  if (app.got_subcommand(kin)) {
    cfg.subcommand = "kinematics";
    finish_common(kin_common, "csv");
    require_usage(kin_order >= 1, "--order must be >= 1");
    require_usage(kin_smoothing > 0.0, "--smoothing must be > 0");
    require_usage(kin_horizon >= 0, "--horizon must be >= 0");
    cfg.params["corpus"] = kin_corpus;
    cfg.params["order"] = std::to_string(kin_order);
    cfg.params["smoothing"] = format_real(kin_smoothing);
    cfg.params["horizon"] = std::to_string(kin_horizon);
    cfg.params["corpus-format"] = kin_corpus_format;
    cfg.params["bits"] = kin_bits ? "1" : "0";
  } else if (app.got_subcommand(des)) {
    cfg.subcommand = "design";
    finish_common(des_common, "json");
    require_usage(des_p >= 1, "--p must be >= 1");
    require_usage(des_n >= des_p, "--n must be at least --p");
    require_usage(des_sigma2 > 0.0, "--sigma2 must be > 0");
    require_usage(des_reps >= 0, "--mc-replicates must be >= 0");
    cfg.params["p"] = std::to_string(des_p);
    cfg.params["n"] = std::to_string(des_n);
    cfg.params["sigma2"] = format_real(des_sigma2);
    cfg.params["mode"] = des_mode;
    cfg.params["mc-replicates"] = std::to_string(des_reps);
  } else if (app.got_subcommand(ctl)) {
    cfg.subcommand = "control";
    finish_common(ctl_common, "json");
    require_usage(ctl_horizon >= 1, "--horizon must be >= 1");
    require_usage(ctl_discount >= 0.0 && ctl_discount < 1.0, "--discount must lie in [0,1)");
    require_usage(ctl_tol > 0.0, "--tol must be > 0");
    require_usage(ctl_max_iters >= 1, "--max-iters must be >= 1");
    cfg.params["problem"] = ctl_problem;
    cfg.params["horizon"] = std::to_string(ctl_horizon);
    cfg.params["discount"] = format_real(ctl_discount);
    cfg.params["tol"] = format_real(ctl_tol);
    cfg.params["max-iters"] = std::to_string(ctl_max_iters);
  } else if (app.got_subcommand(fsh) && fsh->got_subcommand(crs)) {
    cfg.subcommand = "fisher cramer-rao";
    finish_common(crs_common, "json");
    require_usage(crs_n >= 1, "--n must be >= 1");
    require_usage(crs_replicates >= 1, "--replicates must be >= 1");
    cfg.params["model"] = crs_model;
    cfg.params["algo"] = crs_algo;
    cfg.params["theta-star"] =
        crs_theta_star.empty() ? "" : join_reals(parse_real_list(crs_theta_star, "--theta-star"));
    cfg.params["n"] = std::to_string(crs_n);
    cfg.params["replicates"] = std::to_string(crs_replicates);
  } else if (app.got_subcommand(fsh)) {
    cfg.subcommand = "fisher";
    finish_common(fsh_common, "csv");
    require_usage(fsh_alpha > 0.0, "--alpha must be > 0");
    require_usage(fsh_beta1 > 0.0 && fsh_beta1 < 1.0, "--beta1 must lie in the open (0,1)");
    require_usage(fsh_beta2 > 0.0 && fsh_beta2 < 1.0, "--beta2 must lie in the open (0,1)");
    require_usage(fsh_eps >= 0.0, "--eps must be >= 0");
    require_usage(fsh_ridge >= 0.0, "--ridge must be >= 0");
    require_usage(fsh_decay > 0.0 && fsh_decay <= 1.0, "--decay must lie in (0,1]");
    require_usage(fsh_grad_tol > 0.0, "--grad-tol must be > 0");
    require_usage(fsh_steps >= 1, "--steps must be >= 1");
    require_usage(fsh_n >= 1, "--n must be >= 1");
    cfg.params["model"] = fsh_model;
    cfg.params["algo"] = fsh_algo;
    cfg.params["alpha"] = format_real(fsh_alpha);
    cfg.params["beta1"] = format_real(fsh_beta1);
    cfg.params["beta2"] = format_real(fsh_beta2);
    cfg.params["eps"] = format_real(fsh_eps);
    cfg.params["ridge"] = format_real(fsh_ridge);
    cfg.params["decay"] = format_real(fsh_decay);
    cfg.params["grad-tol"] = format_real(fsh_grad_tol);
    cfg.params["steps"] = std::to_string(fsh_steps);
    cfg.params["n"] = std::to_string(fsh_n);
    cfg.params["theta-star"] =
        fsh_theta_star.empty() ? "" : join_reals(parse_real_list(fsh_theta_star, "--theta-star"));
    cfg.params["theta0"] =
        fsh_theta0.empty() ? "" : join_reals(parse_real_list(fsh_theta0, "--theta0"));
  } else {
    fail(ErrorKind::UsageError, "a subcommand is required");
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Typed access into a validated config
// ---------------------------------------------------------------------------

namespace {

const std::string& get_str(const RunConfig& cfg, const std::string& key) {
  const auto it = cfg.params.find(key);
  if (it == cfg.params.end()) fail(ErrorKind::UsageError, "missing parameter '" + key + "'");
  return it->second;
}

double get_real(const RunConfig& cfg, const std::string& key) {
  return parse_real_strict(get_str(cfg, key), key);
}

std::uint64_t get_count(const RunConfig& cfg, const std::string& key) {
  const std::string& text = get_str(cfg, key);
  try {
    return std::stoull(text);
  } catch (const std::exception&) {
    fail(ErrorKind::UsageError, key + ": cannot parse '" + text + "' as a count");
  }
}

// ---------------------------------------------------------------------------
// kinematics
// ---------------------------------------------------------------------------

kinematics::TokenStream load_corpus(const std::string& path, const std::string& encoding) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open corpus '" + path + "'");
  if (encoding == "bytes") {
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.empty()) fail(ErrorKind::InsufficientData, "corpus '" + path + "' is empty");
    std::vector<kinematics::Symbol> symbols(bytes.size());
    for (std::size_t i = 0; i < bytes.size(); ++i)
      symbols[i] = static_cast<unsigned char>(bytes[i]);
    return kinematics::TokenStream(std::move(symbols), 256);
  }
  std::vector<kinematics::Symbol> symbols;
  long long value = 0;
  long long max_seen = 0;
  while (in >> value) {
    if (value < 0) fail(ErrorKind::InvalidObservation, "corpus symbols must be nonnegative");
    symbols.push_back(static_cast<kinematics::Symbol>(value));
    max_seen = std::max(max_seen, value);
  }
  if (!in.eof()) fail(ErrorKind::InvalidObservation, "corpus '" + path + "' has a non-integer token");
  if (symbols.empty()) fail(ErrorKind::InsufficientData, "corpus '" + path + "' is empty");
  return kinematics::TokenStream(std::move(symbols),
                                 static_cast<kinematics::Symbol>(max_seen + 1));
}

std::string run_kinematics(const RunConfig& cfg, RunManifest& mf) {
  const std::size_t order = get_count(cfg, "order");
  const double smoothing = get_real(cfg, "smoothing");
  const std::size_t horizon = get_count(cfg, "horizon");
  const bool bits = get_str(cfg, "bits") == "1";
  const double unit = bits ? std::log(2.0) : 1.0;

  const kinematics::TokenStream stream =
      load_corpus(get_str(cfg, "corpus"), get_str(cfg, "corpus-format"));
  const kinematics::NgramModel model = kinematics::fit_ngram(stream, order, smoothing);
  const kinematics::KinematicsSeries series = kinematics::kinematics_series(model, stream);

  // Rows start at the first position whose context window is full.
  const std::size_t start = order - 1;
  std::size_t count = stream.symbols.size() - start;
  if (horizon > 0) count = std::min(count, horizon);

  Table table;
  table.columns = {"t", "velocity", "acceleration", "distance"};
  double mean_velocity = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t t = start + i;
    std::vector<std::string> row(4);
    row[0] = std::to_string(t);
    row[1] = format_real(series.velocity[t] / unit);
    row[2] = t < series.acceleration.size() ? format_real(series.acceleration[t] / unit)
                                            : std::string();
    row[3] = format_real(series.distance[t] / unit);
    table.rows.push_back(std::move(row));
    mean_velocity += series.velocity[t];
  }
  mean_velocity /= static_cast<double>(count);

  // Independent product-route total against the velocity sum.
  const double total_product_route = kinematics::distance(model, stream);
  double total_sum_route = 0.0;
  for (double v : series.velocity) total_sum_route += v;
  const double route_gap = std::abs(total_product_route - total_sum_route);

  mf.checks.emplace_back("distance_matches_velocity_sum", route_gap < 1e-9);
  mf.metrics.emplace_back("rows", static_cast<double>(count));
  mf.metrics.emplace_back("alphabet", static_cast<double>(stream.alphabet_size));
  mf.metrics.emplace_back("mean_velocity", mean_velocity / unit);
  mf.metrics.emplace_back("total_distance", series.distance.back() / unit);
  mf.metrics.emplace_back("route_gap", route_gap);

  return cfg.format == "csv" ? table_csv(table) : table_json(table);
}

// ---------------------------------------------------------------------------
// design
// ---------------------------------------------------------------------------

std::string run_design(const RunConfig& cfg, RunManifest& mf) {
  const std::size_t p = get_count(cfg, "p");
  const std::size_t n = get_count(cfg, "n");
  const double sigma2 = get_real(cfg, "sigma2");
  const std::string mode = get_str(cfg, "mode");
  const std::size_t reps = get_count(cfg, "mc-replicates");

  const design::RegressionSpec spec(p, n, sigma2);
  SeededRng rng(cfg.seed);
  const design::DesignMatrix d = mode == "optimal"
                                     ? design::construct_optimal(spec, rng, /*strict=*/false)
                                     : design::random_unit_design(spec, rng);

  const double analytic = design::generalization_error(spec, d);
  const double optimal = design::optimal_error(spec);
  const double jensen_gap = analytic - optimal;
  const Vec eigenvalues = numerics::sym_eig(d.gram()).eigenvalues;

  JsonValue report = JsonValue::object();
  report.add("p", JsonValue::raw(std::to_string(p)));
  report.add("n", JsonValue::raw(std::to_string(n)));
  report.add("sigma2", JsonValue::number(sigma2));
  report.add("mode", JsonValue::str(mode));
  report.add("analytic_error", JsonValue::number(analytic));
  report.add("optimal_error", JsonValue::number(optimal));
  report.add("jensen_gap", JsonValue::number(jensen_gap));
  report.add("gram_eigenvalues", json_vec(eigenvalues));

  mf.checks.emplace_back("jensen_bound_holds", jensen_gap >= -1e-12);
  mf.metrics.emplace_back("analytic_error", analytic);
  mf.metrics.emplace_back("optimal_error", optimal);
  mf.metrics.emplace_back("jensen_gap", jensen_gap);
  if (mode == "optimal" && n % p == 0)
    mf.checks.emplace_back("optimal_attains_bound", std::abs(jensen_gap) <= 1e-9);

  if (p >= 2) {
    // The one-point extension gap of a balanced design, measured on a fresh
    // square balanced block so it is defined for both modes.
    const design::DesignMatrix balanced =
        design::construct_optimal(design::RegressionSpec(p, p, sigma2), rng);
    const design::InfeasibilityReport greedy =
        design::greedy_infeasibility_check(balanced, 1000, rng);
    JsonValue node = JsonValue::object();
    node.add("analytic_floor", JsonValue::number(greedy.analytic_floor));
    node.add("min_deviation", JsonValue::number(greedy.min_deviation));
    node.add("trials", JsonValue::raw(std::to_string(greedy.trials)));
    report.add("greedy_infeasibility", std::move(node));
    mf.checks.emplace_back("greedy_floor_respected",
                           greedy.min_deviation >= greedy.analytic_floor - 1e-12);
    mf.metrics.emplace_back("greedy_floor", greedy.analytic_floor);
  }

  if (reps > 0) {
    const double mc =
        design::monte_carlo_error(spec, d, design::default_beta(p), reps, rng);
    const double rel = std::abs(mc - analytic) / analytic;
    JsonValue node = JsonValue::object();
    node.add("replicates", JsonValue::raw(std::to_string(reps)));
    node.add("estimate", JsonValue::number(mc));
    node.add("relative_deviation", JsonValue::number(rel));
    report.add("monte_carlo", std::move(node));
    mf.checks.emplace_back("mc_within_2pct", rel < 0.02);
    mf.metrics.emplace_back("mc_error", mc);
    mf.metrics.emplace_back("mc_relative_deviation", rel);
  }

  return cfg.format == "json" ? to_text(report) : [&] {
    std::string out = "key,value\n";
    flatten_csv(report, "", out);
    return out;
  }();
}

// ---------------------------------------------------------------------------
// control
// ---------------------------------------------------------------------------

Matrix matrix_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array() || j.empty())
    fail(ErrorKind::InvalidMatrix, what + ": expected a nonempty array of rows");
  const std::size_t rows = j.size();
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  if (cols == 0) fail(ErrorKind::InvalidMatrix, what + ": rows must be nonempty arrays");
  std::vector<double> entries;
  entries.reserve(rows * cols);
  for (const auto& row : j) {
    if (!row.is_array() || row.size() != cols)
      fail(ErrorKind::InvalidMatrix, what + ": ragged rows");
    for (const auto& cell : row) {
      if (!cell.is_number()) fail(ErrorKind::InvalidMatrix, what + ": non-numeric entry");
      entries.push_back(cell.get<double>());
    }
  }
  return Matrix(rows, cols, std::move(entries));
}

Vec vec_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array() || j.empty())
    fail(ErrorKind::InvalidMatrix, what + ": expected a nonempty array");
  Vec out;
  out.reserve(j.size());
  for (const auto& cell : j) {
    if (!cell.is_number()) fail(ErrorKind::InvalidMatrix, what + ": non-numeric entry");
    out.push_back(cell.get<double>());
  }
  return out;
}

/// Shared pipeline for regulator instances: Riccati oracle versus the
/// iterative sweep solver, plus the costate/value-gradient comparison.
void run_lqr_case(const control::LqrSpec& spec, double tol, std::size_t max_iters,
                  JsonValue& report, RunManifest& mf) {
  const control::LqrSolution sol =
      control::lqr_oracle(spec.a, spec.b, spec.qc, spec.rc, spec.horizon);
  const control::Trajectory ric = control::lqr_optimal_trajectory(spec, sol);
  const double j_value_form = control::lqr_value(sol, spec.s0);

  control::ControlProblem problem = control::make_lqr_problem(spec, 1e9);
  const std::vector<Vec> zero_actions(spec.horizon, Vec(spec.b.cols(), 0.0));
  const control::SolveResult fb =
      control::forward_backward_solve(problem, zero_actions, max_iters, tol);

  const double j_fb = fb.trajectory.total_return;
  const double j_ric = ric.total_return;
  const double j_gap = std::abs(j_fb - j_ric);

  // Costates against the value-function gradient -2 P_k s_k.
  double costate_dev = 0.0;
  for (std::size_t k = 0; k <= spec.horizon; ++k) {
    const Vec grad_v = sol.value_matrices[k] * fb.trajectory.states[k];
    for (std::size_t j = 0; j < grad_v.size(); ++j)
      costate_dev = std::max(costate_dev,
                             std::abs(fb.costates.lambda[k][j] + 2.0 * grad_v[j]));
  }

  // One-step self-consistency of the oracle's value function along its own
  // optimal trajectory.
  double residual = 0.0;
  for (std::size_t k = 0; k < spec.horizon; ++k) {
    const Vec& s = ric.states[k];
    const Vec& a = ric.actions[k];
    const Vec qs = spec.qc * s;
    const Vec ra = spec.rc * a;
    const double stage = -(numerics::dot(s, qs) + numerics::dot(a, ra));
    const double v_here = -numerics::dot(s, sol.value_matrices[k] * s);
    const Vec& s_next = ric.states[k + 1];
    const double v_next = -numerics::dot(s_next, sol.value_matrices[k + 1] * s_next);
    residual = std::max(residual, std::abs(v_here - (stage + v_next)));
  }

  report.add("horizon", JsonValue::raw(std::to_string(spec.horizon)));
  report.add("state_dim", JsonValue::raw(std::to_string(spec.a.rows())));
  report.add("J_forward_backward", JsonValue::number(j_fb));
  report.add("J_riccati", JsonValue::number(j_ric));
  report.add("J_value_matrix", JsonValue::number(j_value_form));
  report.add("J_gap", JsonValue::number(j_gap));
  report.add("bellman_residual", JsonValue::number(residual));
  report.add("costate_value_gradient_dev", JsonValue::number(costate_dev));
  report.add("iterations", JsonValue::raw(std::to_string(fb.iterations)));
  report.add("max_hamiltonian_gradient", JsonValue::number(fb.max_hamiltonian_gradient));
  report.add("converged", JsonValue::boolean(fb.converged));
  report.add("P0", json_matrix(sol.value_matrices.front()));
  report.add("s0", json_vec(spec.s0));

  mf.checks.emplace_back("solver_converged", fb.converged);
  mf.checks.emplace_back("solvers_agree", j_gap < 1e-6);
  mf.checks.emplace_back("costates_match_value_gradient", costate_dev < 1e-4);
  mf.checks.emplace_back("bellman_residual_small", residual < 1e-8);
  mf.metrics.emplace_back("J_forward_backward", j_fb);
  mf.metrics.emplace_back("J_riccati", j_ric);
  mf.metrics.emplace_back("J_gap", j_gap);
  mf.metrics.emplace_back("costate_value_gradient_dev", costate_dev);
  mf.metrics.emplace_back("bellman_residual", residual);
}

/// Value iteration pipeline shared by the gridworld and custom tabular cases.
void run_finite_case(const control::FiniteMdp& mdp, double tol, std::size_t start_state,
                     JsonValue& report, RunManifest& mf) {
  const control::ValueIterationResult vi = control::value_iteration(mdp, tol);
  const double residual = control::bellman_residual(mdp, vi);
  const Vec policy_values = control::policy_value(mdp, vi.policy);

  report.add("n_states", JsonValue::raw(std::to_string(mdp.n_states)));
  report.add("n_actions", JsonValue::raw(std::to_string(mdp.n_actions)));
  if (mdp.discount) report.add("discount", JsonValue::number(*mdp.discount));
  if (mdp.horizon) report.add("horizon", JsonValue::raw(std::to_string(*mdp.horizon)));
  report.add("values", json_vec(vi.values.front()));
  JsonValue policy = JsonValue::array();
  for (std::size_t action : vi.policy.front())
    policy.push(JsonValue::raw(std::to_string(action)));
  report.add("policy", std::move(policy));
  report.add("policy_values", json_vec(policy_values));
  report.add("bellman_residual", JsonValue::number(residual));
  report.add("iterations", JsonValue::raw(std::to_string(vi.iterations)));
  report.add("start_state", JsonValue::raw(std::to_string(start_state)));
  report.add("start_value", JsonValue::number(vi.values.front()[start_state]));

  // The greedy policy's exact return must reproduce the fixed-point values.
  double policy_gap = 0.0;
  for (std::size_t s = 0; s < mdp.n_states; ++s)
    policy_gap = std::max(policy_gap, std::abs(policy_values[s] - vi.values.front()[s]));

  mf.checks.emplace_back("bellman_residual_small", residual <= tol);
  mf.checks.emplace_back("greedy_policy_consistent", policy_gap <= 1e-6);
  mf.metrics.emplace_back("bellman_residual", residual);
  mf.metrics.emplace_back("start_value", vi.values.front()[start_state]);
  mf.metrics.emplace_back("iterations", static_cast<double>(vi.iterations));
}

control::FiniteMdp make_gridworld(double discount) {
  // 4x4 grid, actions up/right/down/left, 0.8 intended move with 0.1 slip to
  // each side, walls bounce, step cost 0.04, +1 for stepping into the
  // absorbing goal at the far corner.
  constexpr std::size_t kSide = 4;
  constexpr std::size_t kStates = kSide * kSide;
  constexpr std::size_t kGoal = kStates - 1;
  const int dr[4] = {-1, 0, 1, 0};
  const int dc[4] = {0, 1, 0, -1};

  auto step = [&](std::size_t s, std::size_t dir) {
    const int r = static_cast<int>(s / kSide) + dr[dir];
    const int c = static_cast<int>(s % kSide) + dc[dir];
    if (r < 0 || r >= static_cast<int>(kSide) || c < 0 || c >= static_cast<int>(kSide)) return s;
    return static_cast<std::size_t>(r) * kSide + static_cast<std::size_t>(c);
  };

  control::FiniteMdp mdp;
  mdp.n_states = kStates;
  mdp.n_actions = 4;
  mdp.discount = discount;
  mdp.rewards = Matrix(kStates, 4);
  mdp.transitions.assign(4, Matrix(kStates, kStates));
  for (std::size_t a = 0; a < 4; ++a) {
    for (std::size_t s = 0; s < kStates; ++s) {
      if (s == kGoal) {
        mdp.transitions[a](s, s) = 1.0;
        mdp.rewards(s, a) = 0.0;
        continue;
      }
      mdp.transitions[a](s, step(s, a)) += 0.8;
      mdp.transitions[a](s, step(s, (a + 1) % 4)) += 0.1;
      mdp.transitions[a](s, step(s, (a + 3) % 4)) += 0.1;
      mdp.rewards(s, a) = -0.04 + mdp.transitions[a](s, kGoal);
    }
  }
  return mdp;
}

std::string run_control(const RunConfig& cfg, RunManifest& mf) {
  const std::string problem = get_str(cfg, "problem");
  const double tol = get_real(cfg, "tol");
  const std::size_t max_iters = get_count(cfg, "max-iters");

  JsonValue report = JsonValue::object();
  if (problem == "lqr") {
    control::LqrSpec spec;
    spec.a = Matrix(2, 2, {1.0, 0.1, 0.0, 0.95});
    spec.b = Matrix(2, 1, {0.0, 0.1});
    spec.qc = Matrix::diagonal({1.0, 0.5});
    spec.rc = Matrix(1, 1, {0.1});
    spec.horizon = get_count(cfg, "horizon");
    spec.s0 = {1.0, -0.5};
    report.add("problem", JsonValue::str("lqr"));
    run_lqr_case(spec, tol, max_iters, report, mf);
  } else if (problem == "gridworld") {
    const double discount = get_real(cfg, "discount");
    report.add("problem", JsonValue::str("gridworld"));
    run_finite_case(make_gridworld(discount), tol, 0, report, mf);
  } else {
    std::ifstream in(problem);
    if (!in) fail(ErrorKind::IoError, "cannot open problem file '" + problem + "'");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::InvalidMatrix, "problem file: " + std::string(e.what()));
    }
    const std::string type = j.value("type", "");
    if (type == "lqr") {
      control::LqrSpec spec;
      spec.a = matrix_from_json(j.at("A"), "A");
      spec.b = matrix_from_json(j.at("B"), "B");
      spec.qc = matrix_from_json(j.at("Qc"), "Qc");
      spec.rc = matrix_from_json(j.at("Rc"), "Rc");
      spec.s0 = vec_from_json(j.at("s0"), "s0");
      if (!j.contains("horizon") || !j["horizon"].is_number_unsigned())
        fail(ErrorKind::InvalidMatrix, "problem file: lqr needs an unsigned horizon");
      spec.horizon = j["horizon"].get<std::size_t>();
      report.add("problem", JsonValue::str("custom-lqr"));
      run_lqr_case(spec, tol, max_iters, report, mf);
    } else if (type == "finite") {
      control::FiniteMdp mdp;
      const auto& transitions = j.at("transitions");
      if (!transitions.is_array() || transitions.empty())
        fail(ErrorKind::InvalidMatrix, "problem file: transitions must be a nonempty array");
      for (const auto& per_action : transitions)
        mdp.transitions.push_back(matrix_from_json(per_action, "transitions"));
      mdp.rewards = matrix_from_json(j.at("rewards"), "rewards");
      mdp.n_states = mdp.rewards.rows();
      mdp.n_actions = mdp.rewards.cols();
      if (j.contains("horizon")) mdp.horizon = j["horizon"].get<std::size_t>();
      if (j.contains("discount")) mdp.discount = j["discount"].get<double>();
      if (j.contains("terminal")) mdp.terminal = vec_from_json(j["terminal"], "terminal");
      const std::size_t start = j.value("start", 0);
      report.add("problem", JsonValue::str("custom-finite"));
      run_finite_case(mdp, tol, start, report, mf);
    } else {
      fail(ErrorKind::InvalidMatrix, "problem file: type must be 'lqr' or 'finite'");
    }
  }

  return cfg.format == "json" ? to_text(report) : [&] {
    std::string out = "key,value\n";
    flatten_csv(report, "", out);
    return out;
  }();
}

// ---------------------------------------------------------------------------
// fisher
// ---------------------------------------------------------------------------

Vec theta_star_from(const RunConfig& cfg, const fisher::LikelihoodModel& model) {
  const std::string& text = get_str(cfg, "theta-star");
  return text.empty() ? fisher::default_theta_star(model) : parse_real_list(text, "theta-star");
}

Vec default_theta0(const fisher::LikelihoodModel& model, const Vec& theta_star) {
  Vec theta0 = theta_star;
  for (std::size_t j = 0; j < theta0.size(); ++j) theta0[j] += (j % 2 == 0 ? -0.1 : 0.1);
  return model.in_domain(theta0) ? theta0 : theta_star;
}

std::string run_fisher_trace(const RunConfig& cfg, RunManifest& mf) {
  const auto model = fisher::make_model(get_str(cfg, "model"));
  const fisher::Algorithm algo = fisher::algorithm_from_string(get_str(cfg, "algo"));

  fisher::Schedule schedule;
  schedule.alpha = get_real(cfg, "alpha");
  schedule.beta1 = get_real(cfg, "beta1");
  schedule.beta2 = get_real(cfg, "beta2");
  schedule.eps = get_real(cfg, "eps");
  schedule.ridge = get_real(cfg, "ridge");
  schedule.decay = get_real(cfg, "decay");
  schedule.grad_tol = get_real(cfg, "grad-tol");
  schedule.max_steps = get_count(cfg, "steps");
  schedule.record_trace = true;

  const Vec theta_star = theta_star_from(cfg, *model);
  model->require_param(theta_star);
  const std::string& theta0_text = get_str(cfg, "theta0");
  const Vec theta0 = theta0_text.empty() ? default_theta0(*model, theta_star)
                                         : parse_real_list(theta0_text, "theta0");

  const std::size_t n = get_count(cfg, "n");
  SeededRng rng(cfg.seed);
  std::vector<fisher::Obs> data;
  data.reserve(n);
  for (std::size_t i = 0; i < n; ++i) data.push_back(model->sample(theta_star, rng));

  const fisher::FitResult fit = fisher::optimize(*model, algo, theta0, data, schedule);

  Table table;
  table.columns = {"step", "loss", "grad_inf_norm"};
  for (std::size_t j = 0; j < model->param_dim(); ++j)
    table.columns.push_back("theta_" + std::to_string(j));
  for (const fisher::TraceRow& row : fit.trace) {
    std::vector<std::string> cells;
    cells.reserve(3 + row.theta.size());
    cells.push_back(std::to_string(row.step));
    cells.push_back(format_real(row.loss));
    cells.push_back(format_real(row.grad_inf_norm));
    for (double v : row.theta) cells.push_back(format_real(v));
    table.rows.push_back(std::move(cells));
  }

  mf.checks.emplace_back("converged", fit.converged);
  mf.metrics.emplace_back("steps", static_cast<double>(fit.steps));
  mf.metrics.emplace_back("final_loss", fit.final_loss);
  mf.metrics.emplace_back("final_grad_inf_norm", fit.grad_inf_norm);

  return cfg.format == "csv" ? table_csv(table) : table_json(table);
}

std::string run_cramer_rao(const RunConfig& cfg, RunManifest& mf) {
  const auto model = fisher::make_model(get_str(cfg, "model"));
  const fisher::Algorithm algo = fisher::algorithm_from_string(get_str(cfg, "algo"));
  const Vec theta_star = theta_star_from(cfg, *model);
  const std::size_t n = get_count(cfg, "n");
  const std::size_t replicates = get_count(cfg, "replicates");

  SeededRng rng(cfg.seed);
  const fisher::MleReport study =
      fisher::cramer_rao_study(*model, theta_star, n, replicates, rng, std::nullopt, algo);

  JsonValue report = JsonValue::object();
  report.add("model", JsonValue::str(model->name()));
  report.add("algorithm", JsonValue::str(fisher::to_string(algo)));
  report.add("theta_star", json_vec(study.theta_star));
  report.add("n_per_replicate", JsonValue::raw(std::to_string(study.n_per_replicate)));
  report.add("replicates", JsonValue::raw(std::to_string(study.replicates)));
  report.add("failures", JsonValue::raw(std::to_string(study.failures)));
  report.add("mean_estimate", json_vec(study.mean_estimate));
  report.add("max_grad_inf_norm", JsonValue::number(study.max_grad_inf_norm));
  report.add("empirical_covariance", json_matrix(study.empirical_covariance));
  report.add("crlb_reference", json_matrix(study.crlb_reference));
  report.add("min_eig_gap", JsonValue::number(study.min_eig_gap));
  report.add("slack_delta", JsonValue::number(study.slack_delta));
  report.add("bound_satisfied", JsonValue::boolean(study.bound_satisfied));

  mf.checks.emplace_back("cramer_rao_bound_satisfied", study.bound_satisfied);
  mf.metrics.emplace_back("min_eig_gap", study.min_eig_gap);
  mf.metrics.emplace_back("slack_delta", study.slack_delta);
  mf.metrics.emplace_back("failures", static_cast<double>(study.failures));

  if (model->param_dim() == 1) {
    const double n_var = static_cast<double>(n) * study.empirical_covariance(0, 0);
    const double crlb = static_cast<double>(n) * study.crlb_reference(0, 0);
    const double rel = std::abs(n_var - crlb) / crlb;
    report.add("scaled_variance", JsonValue::number(n_var));
    report.add("scaled_crlb", JsonValue::number(crlb));
    report.add("scaled_variance_relative_gap", JsonValue::number(rel));
    mf.checks.emplace_back("scaled_variance_within_10pct", rel <= 0.10);
    mf.metrics.emplace_back("scaled_variance", n_var);
    mf.metrics.emplace_back("scaled_crlb", crlb);
  }

  return cfg.format == "json" ? to_text(report) : [&] {
    std::string out = "key,value\n";
    flatten_csv(report, "", out);
    return out;
  }();
}

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

void write_artifact(const RunConfig& cfg, const std::string& hash, const std::string& body) {
  std::string full = "# manifest " + hash + "\n" + body;
  if (cfg.out.empty()) {
    std::cout << full;
    return;
  }
  std::ofstream out(cfg.out, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot open output file '" + cfg.out + "'");
  out << full;
  if (!out) fail(ErrorKind::IoError, "failed writing output file '" + cfg.out + "'");
}

}  // namespace

RunManifest run(const RunConfig& config) {
  RunManifest mf;
  mf.config = config;
  mf.version = kVersion;
  mf.hash = manifest_hash(config);

  const auto started = std::chrono::steady_clock::now();
  try {
    std::string body;
    if (config.subcommand == "kinematics") body = run_kinematics(config, mf);
    else if (config.subcommand == "design") body = run_design(config, mf);
    else if (config.subcommand == "control") body = run_control(config, mf);
    else if (config.subcommand == "fisher") body = run_fisher_trace(config, mf);
    else if (config.subcommand == "fisher cramer-rao") body = run_cramer_rao(config, mf);
    else fail(ErrorKind::UsageError, "unknown subcommand '" + config.subcommand + "'");
    write_artifact(config, mf.hash, body);
  } catch (const LabError& e) {
    if (e.kind() == ErrorKind::UsageError) throw;
    mf.ok = false;
    mf.error = e.what();
  }
  mf.duration_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return mf;
}

std::string manifest_json(const RunManifest& mf) {
  JsonValue root = JsonValue::object();
  root.add("version", JsonValue::str(mf.version));
  root.add("subcommand", JsonValue::str(mf.config.subcommand));
  root.add("hash", JsonValue::str(mf.hash));
  root.add("seed", JsonValue::raw(std::to_string(mf.config.seed)));
  root.add("out", JsonValue::str(mf.config.out));
  root.add("format", JsonValue::str(mf.config.format));
  JsonValue params = JsonValue::object();
  for (const auto& [key, value] : mf.config.params) params.add(key, JsonValue::str(value));
  root.add("params", std::move(params));
  root.add("duration_seconds", JsonValue::number(mf.duration_seconds));
  root.add("ok", JsonValue::boolean(mf.ok));
  root.add("error", mf.error.empty() ? JsonValue::null() : JsonValue::str(mf.error));
  JsonValue checks = JsonValue::object();
  for (const auto& [name, passed] : mf.checks) checks.add(name, JsonValue::boolean(passed));
  root.add("checks", std::move(checks));
  JsonValue metrics = JsonValue::object();
  for (const auto& [name, value] : mf.metrics) metrics.add(name, JsonValue::number(value));
  root.add("metrics", std::move(metrics));
  return to_text(root);
}

int main_entry(const std::vector<std::string>& args) {
  try {
    const RunConfig cfg = parse_args(args);
    if (cfg.subcommand == "help") return 0;
    const RunManifest mf = run(cfg);
    // The manifest goes to stdout when the artifact went to a file; artifact
    // streams stay clean otherwise.
    if (!cfg.out.empty()) std::cout << manifest_json(mf);
    if (!mf.ok) {
      std::cerr << "error: " << mf.error << "\n";
      return 1;
    }
    return 0;
  } catch (const LabError& e) {
    if (e.kind() == ErrorKind::UsageError) {
      std::cerr << "usage error: " << e.what() << "\nRun 'lab --help' for usage.\n";
      return 2;
    }
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace lab::cli
