#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "figclass/commands.hpp"
#include "figclass/error.hpp"

namespace fc = figclass;

namespace {

std::string env_or(const char* name, std::string fallback) {
  if (const char* v = std::getenv(name); v && *v) return v;
  return fallback;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Patent figure classification with vision-language models"};
  app.require_subcommand(1);

  // classify
  fc::RunConfig run;
  std::string strategy = "mc-ts";
  std::string split;
  std::string templates, cache;
  auto* classify = app.add_subcommand("classify", "classify figures along one aspect");
  classify->add_option("--strategy", strategy, "bc | oc | mc | mc-ts")->capture_default_str();
  classify->add_option("--k", run.k, "subset size for mc-ts")->capture_default_str();
  classify->add_option("--seed", run.seed, "random seed")->capture_default_str();
  classify->add_option("--aspect", run.aspect, "aspect to classify (type, projection, object, uspc, ...)");
  classify->add_option("--backend-url", run.backend_url, "model backend; defaults to $FIGCLASS_BACKEND_URL");
  classify->add_option("--embed-url", run.embed_url, "embedding backend for oc");
  classify->add_option("--max-concurrency", run.max_concurrency, "concurrent backend requests")->capture_default_str();
  classify->add_option("--figures", run.figures_path, "figures JSONL");
  classify->add_option("--concepts", run.concepts_path, "concepts JSONL");
  classify->add_option("--split", split, "only figures of this split");
  classify->add_option("--templates", templates, "question templates JSON");
  classify->add_option("--cache", cache, "embedding cache JSONL");
  classify->add_option("--out", run.out_dir, "output directory");

  // plan
  std::size_t plan_n = 0, plan_k = 5;
  auto* plan = app.add_subcommand("plan", "print tournament rounds and query count");
  plan->add_option("--concepts,-n", plan_n, "number of concepts")->required();
  plan->add_option("--k", plan_k, "subset size")->capture_default_str();

  // eval
  fc::EvalConfig ev;
  std::string eval_concepts;
  auto* eval = app.add_subcommand("eval", "score classification results or VQA predictions");
  eval->add_option("--results", ev.results_path, "classification results JSONL");
  eval->add_option("--vqa", ev.vqa_path, "VQA predictions JSONL {qtype, prediction, answer}");
  eval->add_option("--gold", ev.gold_path, "figures JSONL with ground truth, or cls.jsonl");
  eval->add_option("--concepts", eval_concepts, "concepts JSONL (labels, confusion matrix)");
  eval->add_option("--semeq", ev.judge_url, "judge backend url; adds the semeq metric");
  eval->add_option("--out", ev.out_dir, "output directory");

  // build-dataset
  fc::BuildConfig build;
  std::string build_templates;
  auto* bd = app.add_subcommand("build-dataset", "build classification and VQA splits from a corpus");
  bd->add_option("--corpus", build.corpus_path, "figures JSONL with ground truth");
  bd->add_option("--concepts", build.concepts_path, "concepts JSONL");
  bd->add_option("--aspect", build.aspect, "aspect");
  bd->add_option("--seed", build.seed, "random seed")->capture_default_str();
  bd->add_option("--train-per-concept", build.cls.train_per_concept, "training figures per concept")->capture_default_str();
  bd->add_option("--valid", build.cls.valid_target, "validation size")->capture_default_str();
  bd->add_option("--test", build.cls.test_target, "test size")->capture_default_str();
  bd->add_option("--k-choices", build.k_choices, "multiple-choice sizes")->capture_default_str();
  bd->add_option("--embed-url", build.embed_url, "embedding backend for similar-concept distractors");
  bd->add_option("--templates", build_templates, "question templates JSON");
  bd->add_option("--out", build.out_dir, "output directory");

  // conformance
  std::string conf_url;
  auto* conf = app.add_subcommand("conformance", "check a model server against the wire protocol");
  conf->add_option("--backend-url", conf_url, "server url; defaults to $FIGCLASS_BACKEND_URL");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return fc::kExitUsage;
  }

  try {
    if (*classify) {
      const auto s = fc::parse_strategy(strategy);
      if (!s) throw fc::UsageError("unknown strategy '" + strategy + "'");
      run.strategy = *s;
      if (run.backend_url.empty()) run.backend_url = env_or(fc::kBackendUrlEnv, "");
      if (!split.empty()) {
        run.split = fc::parse_split(split);
        if (!run.split) throw fc::UsageError("unknown split '" + split + "'");
      }
      if (!templates.empty()) run.templates_path = templates;
      if (!cache.empty()) run.cache_path = cache;
      const auto results = fc::cmd_classify(run);
      std::cout << "classified " << results.size() << " figures -> " << (run.out_dir / "results.jsonl").string()
                << '\n';
    } else if (*plan) {
      std::cout << fc::cmd_plan(plan_n, plan_k) << '\n';
    } else if (*eval) {
      if (!eval_concepts.empty()) ev.concepts_path = eval_concepts;
      if (ev.results_path.empty() && ev.vqa_path.empty()) throw fc::UsageError("pass --results or --vqa");
      const auto report = fc::cmd_eval(ev);
      std::cout << fc::to_json(report).dump() << '\n';
    } else if (*bd) {
      if (!build_templates.empty()) build.templates_path = build_templates;
      const auto out = fc::cmd_build_dataset(build);
      for (const auto& w : out.cls.warnings) std::cerr << "warning: " << w << '\n';
      std::cout << "train=" << out.cls.size(fc::Split::train) << " valid=" << out.cls.size(fc::Split::valid)
                << " test=" << out.cls.size(fc::Split::test) << " vqa=" << out.vqa.size() << '\n';
      if (!out.cls_report.ok() || !out.vqa_report.ok()) {
        std::cerr << "dataset validation failed; see manifest.json\n";
        return fc::kExitFailure;
      }
    } else if (*conf) {
      if (conf_url.empty()) conf_url = env_or(fc::kBackendUrlEnv, "");
      if (conf_url.empty()) throw fc::UsageError("no backend: pass --backend-url or set FIGCLASS_BACKEND_URL");
      const auto checks = fc::cmd_conformance(conf_url);
      fc::print_checks(std::cout, checks);
      return fc::all_passed(checks) ? fc::kExitOk : fc::kExitFailure;
    }
  } catch (const fc::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return fc::kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return fc::kExitFailure;
  }
  return fc::kExitOk;
}
