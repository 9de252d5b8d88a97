#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "graphdkl/errors.hpp"
#include "graphdkl/experiment.hpp"

namespace fs = std::filesystem;
using namespace graphdkl;

namespace {

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kData = 3, kNumeric = 4 };

struct CommonOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool no_spectral_norm = false;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool config_required) {
  auto* c = cmd->add_option("--config", o.config, "experiment config (flat JSON)");
  if (config_required) c->required();
  cmd->add_option("--out", o.out, "output directory (defaults to the config's out_dir)");
  cmd->add_option("--seed", o.seed, "override the config seed");
  cmd->add_flag("--no-spectral-norm", o.no_spectral_norm, "train without spectral normalization");
}

ExperimentConfig resolve(const CommonOptions& o) {
  ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_experiment_config(o.config);
  if (o.seed) cfg.set_seed(*o.seed);
  if (o.no_spectral_norm) cfg.train.spectral_norm = false;
  cfg.validate();
  return cfg;
}

fs::path out_dir(const CommonOptions& o, const ExperimentConfig& cfg) {
  if (!o.out.empty()) return o.out;
  if (!cfg.out_dir.empty()) return cfg.out_dir;
  throw ConfigError("no output directory: pass --out or set out_dir in the config");
}

void print_curve(const RejectionCurve& c) {
  for (std::size_t i = 0; i < c.proportions.size(); ++i)
    std::printf("  %4.0f%%  %.4f  (n=%zu)\n", 100.0 * c.proportions[i], c.retained_pehe[i],
                c.n_retained[i]);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph deep kernel learning for uncertainty-aware treatment effects"};
  app.require_subcommand(1);

  CommonOptions gen_opt, train_opt, eval_opt, sweep_opt, demo_opt;
  std::string train_data, eval_data, checkpoint;
  bool resume = false;
  unsigned threads = 0;
  int demo_epochs = 300;

  auto* gen = app.add_subcommand("generate", "write a synthetic dataset");
  add_common(gen, gen_opt, true);

  auto* trn = app.add_subcommand("train", "train a model and save checkpoints");
  add_common(trn, train_opt, true);
  trn->add_option("--data", train_data, "dataset directory (generated from the config if omitted)");
  trn->add_flag("--resume", resume, "continue from <out>/state");

  auto* evl = app.add_subcommand("evaluate", "rejection curves for a trained model");
  add_common(evl, eval_opt, true);
  evl->add_option("--checkpoint", checkpoint, "train output directory")->required();
  evl->add_option("--data", eval_data, "dataset directory (generated from the config if omitted)");

  auto* swp = app.add_subcommand("sweep", "seeds x imbalance grid, aggregated curves");
  add_common(swp, sweep_opt, true);
  swp->add_option("--threads", threads, "worker slots (default: GRAPHDKL_THREADS or all cores)");

  auto* demo = app.add_subcommand("demo-collapse", "2-D toy latents with and without normalization");
  add_common(demo, demo_opt, false);
  demo->add_option("--epochs", demo_epochs, "training epochs per variant");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*gen) {
      const ExperimentConfig cfg = resolve(gen_opt);
      const fs::path out = out_dir(gen_opt, cfg);
      const CausalDataset ds = run_generate(cfg, out);
      std::printf("dataset: %zu nodes, %zu edges -> %s\n", ds.size(), ds.graph.num_edges(),
                  out.c_str());
    } else if (*trn) {
      const ExperimentConfig cfg = resolve(train_opt);
      const fs::path out = out_dir(train_opt, cfg);
      const TrainOutcome r = run_train(cfg, train_data, out, resume);
      std::printf("trained %d epochs, best epoch %d -> %s\n", r.epochs_run, r.result.best_epoch,
                  out.c_str());
    } else if (*evl) {
      const ExperimentConfig cfg = resolve(eval_opt);
      const fs::path out = out_dir(eval_opt, cfg);
      const EvalOutcome r = run_evaluate(cfg, checkpoint, eval_data, out);
      std::printf("sqrt PEHE %.4f, audit max ratio %.4f\nretained sqrt PEHE:\n", r.full_pehe,
                  r.audit.max_ratio);
      print_curve(r.curve);
    } else if (*swp) {
      const ExperimentConfig cfg = resolve(sweep_opt);
      const fs::path out = out_dir(sweep_opt, cfg);
      const SweepOutcome r = run_sweep(cfg, out, threads, [](const SeedRun& run) {
        std::fprintf(stderr, "k=%g seed=%llu: sqrt PEHE %.4f (best epoch %d)\n", run.k,
                     static_cast<unsigned long long>(run.seed), run.full_pehe, run.best_epoch);
      });
      for (const SweepBlock& b : r.blocks) {
        std::printf("k=%g  mean sqrt PEHE %.4f  max audit %.4f\n", b.k, b.mean_full_pehe,
                    b.max_audit_ratio);
        for (std::size_t i = 0; i < b.curve.proportions.size(); ++i)
          std::printf("  %4.0f%%  %.4f +- %.4f   random %.4f\n", 100.0 * b.curve.proportions[i],
                      b.curve.mean[i], b.curve.std[i], b.random_curve.mean[i]);
      }
    } else if (*demo) {
      const ExperimentConfig cfg = resolve(demo_opt);
      const fs::path out = out_dir(demo_opt, cfg);
      const CollapseOutcome r = run_demo_collapse(out, cfg.seed(), demo_epochs);
      std::printf("normalized: pair ratio %.4f, perturbation ratio %.4f\n", r.sn.audit.max_ratio,
                  r.sn.perturbation.max_ratio);
      std::printf("unconstrained: pair ratio %.4f, perturbation ratio %.4f\n",
                  r.nosn.audit.max_ratio, r.nosn.perturbation.max_ratio);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kNumeric;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kNumeric;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const IoError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const MetricError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kOther;
  }
  return kOk;
}
