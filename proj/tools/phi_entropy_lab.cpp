// phi-entropy-lab: command-line front end for the phient library.
// Exit codes: 0 all in-class checks hold, 1 violation, 2 configuration or input error.

#include "phient/phient.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace phient;

struct Globals {
  std::uint64_t seed = 20240601;
  double tol = -1.0;  // negative: use each check's default
  std::string output;
  bool quiet = false;
};

class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InputError("'" + path + "' is not valid JSON: " + e.what());
  }
}

double tol_or(const Globals& g, double fallback) { return g.tol >= 0.0 ? g.tol : fallback; }

// JSON goes to --output or stdout; the summary line goes to stdout when the
// JSON does not, stderr otherwise, so piped JSON stays parseable.
void emit(const Globals& g, const json& body, const std::string& summary) {
  if (!g.output.empty()) {
    std::ofstream out(g.output);
    if (!out) throw InputError("cannot write '" + g.output + "'");
    out << body.dump(2) << "\n";
  } else if (!g.quiet) {
    std::cout << body.dump(2) << "\n";
  }
  if (g.quiet || !g.output.empty()) {
    std::cout << summary << "\n";
  } else {
    std::cerr << summary << "\n";
  }
}

std::string verdict(const VerificationReport& r) {
  std::ostringstream os;
  os << (r.holds ? "PASS " : "FAIL ") << r.check_name << " margin=" << r.margin << " tol=" << r.tolerance;
  if (r.trials > 1) os << " trials=" << r.trials << " violations=" << r.violations;
  return os.str();
}

int report_exit(const Globals& g, const VerificationReport& r) {
  emit(g, json(r), verdict(r));
  return r.holds ? 0 : 1;
}

bool is_product(const json& j) { return j.contains("factors"); }

MatrixEnsemble load_ensemble(const json& j) { return is_product(j) ? product_from_json(j).joint() : ensemble_from_json(j); }

std::vector<std::string> split_items(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Matrix and operator-valued Phi-entropies, Frechet derivatives and their verification harness"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Root seed for every sampled check");
  app.add_option("--tol", g.tol, "Tolerance override (normalised margin)");
  app.add_option("--output", g.output, "Write the JSON report to this file");
  app.add_flag("--quiet", g.quiet, "Print only the summary line");

  std::string phi = "square", variant = "trace", input;
  bool allow_outside = false;

  // entropy
  auto* entropy = app.add_subcommand("entropy", "Phi-entropy of an ensemble (product ensembles use their joint law)");
  entropy->add_option("--phi", phi, "square, xlogx, power:p, affine:a:b, quartic, exp, cubic")->required();
  entropy->add_option("--variant", variant, "trace (default) or operator")->check(CLI::IsMember({"trace", "operator"}));
  entropy->add_option("--input", input, "Ensemble or product-ensemble JSON")->required();

  // frechet
  int order = 1;
  std::string matrix_path, direction_path;
  std::string third_method = "hybrid";
  auto* frechet = app.add_subcommand("frechet", "k-th Frechet derivative D^k f[A](X, ..., X)");
  frechet->add_option("--phi", phi, "square, xlogx, power:p, affine:a:b, quartic, exp, cubic")->required();
  frechet->add_option("--order", order, "Derivative order")->check(CLI::Range(1, 3));
  frechet->add_option("--matrix", matrix_path, "Base point A (matrix JSON)")->required();
  frechet->add_option("--direction", direction_path, "Direction X (matrix JSON)")->required();
  frechet->add_option("--method", third_method, "Order 3 only: hybrid or divided_difference")
      ->check(CLI::IsMember({"hybrid", "divided_difference"}));

  // check-subadditivity
  auto* sub = app.add_subcommand("check-subadditivity", "Tensorisation inequality on a product ensemble");
  sub->add_option("--phi", phi, "square, xlogx, power:p, affine:a:b, quartic, exp, cubic")->required();
  sub->add_option("--variant", variant, "trace (default) or operator")->check(CLI::IsMember({"trace", "operator"}));
  sub->add_option("--input", input, "Ensemble or product-ensemble JSON")->required();
  sub->add_flag("--allow-outside-class", allow_outside, "Run even when phi lacks the required class");

  // check-efron-stein
  int es_power = 0;
  auto* es = app.add_subcommand("check-efron-stein", "Var(Z) <= E(Z) (operator) or its Schatten-p form (trace)");
  es->add_option("--variant", variant, "trace (default) or operator")->check(CLI::IsMember({"trace", "operator"}));
  es->add_option("--p", es_power, "Schatten exponent for the trace variant (default 2)");
  es->add_option("--input", input, "Ensemble or product-ensemble JSON")->required();
  // accepted for symmetry with the other subcommands; the check does not depend on Phi
  es->add_option("--phi", phi, "square, xlogx, power:p, affine:a:b, quartic, exp, cubic");

  // check-characterizations
  std::string items = "b,c,d,e,f,g";
  int dim = 2;
  std::int64_t trials = 200;
  auto* chars = app.add_subcommand("check-characterizations", "Sampled convexity characterisations, one report per item");
  chars->add_option("--phi", phi, "square, xlogx, power:p, affine:a:b, quartic, exp, cubic")->required();
  chars->add_option("--items", items, "Comma list from a,b,c,d,e,f,g,h");
  chars->add_option("--dim", dim, "Matrix dimension")->check(CLI::Range(1, 16));
  chars->add_option("--trials", trials, "Number of sampled trials")->check(CLI::PositiveNumber);
  chars->add_option("--variant", variant, "trace (default) or operator")->check(CLI::IsMember({"trace", "operator"}));
  chars->add_flag("--allow-outside-class", allow_outside, "Run even when phi lacks the required class");

  // check-monotonicity
  std::string channel_spec = "random:2", form = "literal";
  auto* mono = app.add_subcommand("check-monotonicity", "Entropy monotonicity under unital channels");
  mono->add_option("--phi", phi, "square, xlogx, power:p, affine:a:b, quartic, exp, cubic")->required();
  mono->add_option("--variant", variant, "trace (default) or operator")->check(CLI::IsMember({"trace", "operator"}));
  mono->add_option("--channel", channel_spec, "Kraus JSON file or random:k");
  mono->add_option("--input", input, "Ensemble JSON; random ensembles when omitted");
  mono->add_option("--trials", trials, "Number of sampled trials")->check(CLI::PositiveNumber);
  mono->add_option("--dim", dim, "Dimension of random ensembles when --input is omitted")->check(CLI::Range(1, 16));
  mono->add_option("--form", form, "Operator variant: literal H(N(Z)) <= H(Z) or covariant H(N(Z)) <= N(H(Z))")
      ->check(CLI::IsMember({"literal", "covariant"}));
  mono->add_flag("--allow-outside-class", allow_outside, "Run even when phi lacks the required class");

  // search-counterexample
  std::string check_name;
  std::int64_t budget = 10000;
  int search_dim = 1;
  auto* search = app.add_subcommand("search-counterexample", "Random plus local search for a violating instance");
  search->add_option("--phi", phi, "square, xlogx, power:p, affine:a:b, quartic, exp, cubic")->required();
  search->add_option("--check", check_name, "Registry check name, e.g. char_d or condition_a")->required();
  search->add_option("--budget", budget, "Maximum number of evaluated instances")->check(CLI::PositiveNumber);
  search->add_option("--dim", search_dim, "Matrix dimension")->check(CLI::Range(1, 16));
  search->add_option("--variant", variant, "trace (default) or operator")->check(CLI::IsMember({"trace", "operator"}));

  // run-suite
  std::string config_path;
  unsigned threads = 0;
  auto* suite = app.add_subcommand("run-suite", "Run the configured checks and write a suite report");
  suite->add_option("config", config_path, "RunConfig JSON")->required();
  suite->add_option("--threads", threads, "Worker count (default PHI_LAB_THREADS or hardware)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*entropy) {
      const auto f = builtin(phi, true);
      const auto e = load_ensemble(read_json(input));
      const auto v = parse_variant(variant);
      const auto value = phi_entropy(f, e, v);
      json body{{"phi", f.name}, {"variant", to_string(v)}};
      std::ostringstream summary;
      summary << "H[" << f.name << "," << to_string(v) << "] = ";
      if (v == Variant::trace) {
        body["value"] = std::get<double>(value);
        summary << std::get<double>(value);
      } else {
        const auto& m = std::get<HermitianMatrix>(value);
        body["value"] = to_json_value(m);
        summary << "matrix, min eigenvalue " << min_eigenvalue(m);
      }
      emit(g, body, summary.str());
      return 0;
    }

    if (*frechet) {
      const auto f = builtin(phi, true);
      const auto a = hermitian_from_json(read_json(matrix_path));
      const auto x = hermitian_from_json(read_json(direction_path));
      HermitianMatrix d;
      if (order == 1) {
        d = frechet_d1(f, a, x);
      } else if (order == 2) {
        d = frechet_d2(f, a, x, x);
      } else {
        d = frechet_d3(f, a, x, x, x,
                       third_method == "hybrid" ? ThirdOrderMethod::hybrid : ThirdOrderMethod::divided_difference);
      }
      std::ostringstream summary;
      summary << "D^" << order << " " << f.name << " computed, Frobenius norm " << d.frobenius();
      emit(g, json{{"phi", f.name}, {"order", order}, {"derivative", to_json_value(d)}}, summary.str());
      return 0;
    }

    if (*sub) {
      const auto p = product_from_json(read_json(input));
      const auto r =
          check_subadditivity(builtin(phi, true), p, parse_variant(variant), allow_outside, tol_or(g, 1e-10));
      return report_exit(g, r);
    }

    if (*es) {
      const auto p = product_from_json(read_json(input));
      if (parse_variant(variant) == Variant::operator_valued) {
        if (es_power != 0) throw ConfigError("--p applies to the trace variant only");
        return report_exit(g, check_operator_efron_stein(p, tol_or(g, 1e-10)));
      }
      return report_exit(g, check_polynomial_efron_stein(p, es_power == 0 ? 2 : es_power, tol_or(g, 1e-10)));
    }

    if (*chars) {
      const auto f = builtin(phi, true);
      const auto v = parse_variant(variant);
      const auto reg = check_registry();
      json out = json::array();
      bool all_hold = true;
      std::ostringstream summary;
      for (const auto& item : split_items(items)) {
        const std::string name = item == "a" || item == "e" ? "condition_" + item : "char_" + item;
        const CheckSpec* spec = find_check(reg, name);
        if (!spec || item.size() != 1) throw ConfigError("unknown characterisation item '" + item + "'");
        if (std::find(spec->variants.begin(), spec->variants.end(), v) == spec->variants.end()) {
          throw ConfigError("item '" + item + "' has no " + to_string(v) + " variant");
        }
        if (!spec->in_class(f, v) && !allow_outside) {
          throw ClassGateError(name + ": " + f.name + " is outside the class; pass --allow-outside-class");
        }
        const SuiteEntry e = run_cell(*spec, f, v, dim, trials, g.seed, tol_or(g, spec->default_tolerance), 0);
        VerificationReport r = e.report;
        if (e.errors > 0) {
          r.holds = false;
          r.note += "; " + std::to_string(e.errors) + " trials raised: " + e.first_error;
        }
        all_hold = all_hold && r.holds;
        summary << (r.holds ? "PASS " : "FAIL ") << item << " ";
        out.push_back(r);
      }
      emit(g, out, summary.str());
      return all_hold ? 0 : 1;
    }

    if (*mono) {
      const auto f = builtin(phi, true);
      const auto v = parse_variant(variant);
      const bool covariant = v == Variant::operator_valued && form == "covariant";
      require_class(f, covariant ? ClassTag::C3 : required_class(v), allow_outside, "check-monotonicity");
      std::optional<MatrixEnsemble> fixed;
      if (!input.empty()) fixed = load_ensemble(read_json(input));
      const bool random_channel = channel_spec.rfind("random:", 0) == 0;
      std::optional<KrausChannel> channel;
      std::size_t kraus = 1;
      if (random_channel) {
        try {
          kraus = std::stoul(channel_spec.substr(7));
        } catch (const std::exception&) {
          throw ConfigError("--channel random:k needs a positive integer k");
        }
        if (kraus < 1) throw ConfigError("--channel random:k needs k >= 1");
      } else {
        channel = channel_from_json(read_json(channel_spec));
      }
      const std::int64_t runs = random_channel || !fixed ? trials : 1;
      const Eigen::Index d = fixed ? fixed->dim : channel ? channel->dim : dim;
      const double tol = tol_or(g, 1e-10);
      VerificationReport acc;
      acc.check_name = std::string(covariant ? "covariant_" : "") + "monotonicity[" + f.name + "," + to_string(v) + "]";
      acc.tolerance = tol;
      acc.seed = g.seed;
      for (std::int64_t k = 0; k < runs; ++k) {
        Rng rng(g.seed, "cli-monotonicity", static_cast<std::uint64_t>(k));
        const KrausChannel n = channel ? *channel : random_unital_channel(d, kraus, rng);
        const MatrixEnsemble e = fixed ? *fixed : sample_ensemble(d, 2 + rng.index(3), kSpectralFloor, rng);
        auto r = covariant ? check_covariant_monotonicity(f, n, e, true, tol) : check_monotonicity(f, n, e, v, true, tol);
        r.trials = 1;
        r.violations = r.holds ? 0 : 1;
        absorb(acc, r);
      }
      if (v == Variant::operator_valued && !covariant) {
        acc.note = "literal Loewner form; unitary channels rotate H(Z), so this form can fail for them";
      }
      return report_exit(g, acc);
    }

    if (*search) {
      const auto f = builtin(phi, true);
      const auto r = counterexample_search(f, check_name, budget, g.seed, search_dim, parse_variant(variant), g.tol);
      // A found counterexample is the expected outcome for outside-class functions.
      emit(g, json(r), (r.holds ? "NOT FOUND " : "FOUND ") + r.check_name + " margin=" + std::to_string(r.margin) +
                           " trials=" + std::to_string(r.trials));
      return r.holds ? 0 : 1;
    }

    if (*suite) {
      RunConfig c = config_from_json(read_json(config_path));
      if (threads > 0) c.threads = threads;
      if (app.get_option("--seed")->count() > 0) c.seed = g.seed;
      if (!c.output_path.empty() && g.output.empty()) g.output = c.output_path;
      const SuiteReport r = run_suite(c);
      std::ostringstream summary;
      summary << "pass=" << r.pass << " fail=" << r.fail << " skip=" << r.skip << " exit=" << r.exit_code;
      emit(g, json(r), summary.str());
      return r.exit_code;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return 2;
  } catch (const std::domain_error& e) {
    std::cerr << "domain error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
