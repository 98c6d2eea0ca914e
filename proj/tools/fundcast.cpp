#include <array>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fundcast/clustering.hpp"
#include "fundcast/data.hpp"
#include "fundcast/evaluation.hpp"
#include "fundcast/models.hpp"
#include "fundcast/training.hpp"

namespace fs = std::filesystem;
using namespace fundcast;

namespace {

struct Range {
  std::size_t lo = 0;
  std::size_t hi = 0;
};

Range parse_range(const std::string& text) {
  const auto pos = text.find("..");
  if (pos == std::string::npos)
    throw UsageError("range '" + text + "' must look like lo..hi");
  try {
    Range r;
    r.lo = std::stoul(text.substr(0, pos));
    r.hi = std::stoul(text.substr(pos + 2));
    if (r.lo > r.hi) throw UsageError("range '" + text + "' has lo > hi");
    return r;
  } catch (const std::invalid_argument&) {
    throw UsageError("range '" + text + "' must look like lo..hi");
  } catch (const std::out_of_range&) {
    throw UsageError("range '" + text + "' is out of range");
  }
}

struct GenerateArgs {
  std::size_t n = 1000;
  std::uint64_t seed = 1;
  std::string out;
  std::vector<double> mix{kDefaultClusterMix.begin(), kDefaultClusterMix.end()};
};

int cmd_generate(const GenerateArgs& args) {
  if (args.mix.size() != 4) throw UsageError("--mix needs exactly 4 values");
  std::array<double, 4> mix;
  std::copy(args.mix.begin(), args.mix.end(), mix.begin());
  SyntheticCorpus synth = generate_synthetic(args.n, args.seed, mix);
  save_corpus(synth.cases, args.out);
  std::array<std::size_t, 4> counts{};
  for (int z : synth.planted_cluster) ++counts[static_cast<std::size_t>(z)];
  std::cout << "wrote " << synth.cases.size() << " cases to " << args.out << "\n";
  static const char* kClusterNames[4] = {"low-interest", "active-repliers",
                                         "social-attention", "young-female"};
  for (int z = 0; z < 4; ++z)
    std::cout << "  cluster " << (z + 1) << " (" << kClusterNames[z] << "): "
              << counts[static_cast<std::size_t>(z)] << " cases ("
              << 100.0 * static_cast<double>(counts[static_cast<std::size_t>(z)]) /
                     static_cast<double>(synth.cases.size())
              << "%)\n";
  return 0;
}

struct TrainArgs {
  std::string data;
  std::string variant;
  std::string out_checkpoint = "model.ckpt";
  std::string history;
  std::uint64_t seed = 1;
  TrainConfig train;
  // architecture overrides; zero/empty means keep the variant default
  std::size_t vocab_size = 0;
  std::size_t emb_dim = 0;
  std::size_t max_post_len = 0;
  std::vector<std::size_t> lstm_units;
  std::vector<std::size_t> head_hidden;
  std::vector<std::size_t> nn_hidden;
  std::vector<std::size_t> pre_dense;
  std::size_t conv_layers = 0;
  std::size_t conv_filters = 0;
  std::size_t conv_window = 0;
  std::size_t conv_pool = 0;
};

int cmd_train(const TrainArgs& args) {
  const ModelVariant variant = parse_variant(args.variant);
  Corpus corpus = load_corpus(args.data);
  const Dataset splits = split_cases(corpus, {0.8, 0.1, 0.1}, args.seed);

  ArchConfig config = ArchConfig::defaults_for(variant);
  if (args.vocab_size) config.vocab_size = args.vocab_size;
  if (args.emb_dim) config.emb_dim = args.emb_dim;
  if (args.max_post_len) config.max_post_len = args.max_post_len;
  if (!args.lstm_units.empty()) config.lstm_units = args.lstm_units;
  if (!args.head_hidden.empty()) config.head_hidden = args.head_hidden;
  if (!args.nn_hidden.empty()) config.nn_hidden = args.nn_hidden;
  if (!args.pre_dense.empty()) config.pre_dense = args.pre_dense;
  if (args.conv_layers || args.conv_filters || args.conv_window || args.conv_pool) {
    ConvPoolLayerSpec spec{args.conv_filters ? args.conv_filters : 16,
                           args.conv_window ? args.conv_window : 3,
                           args.conv_pool ? args.conv_pool : 2};
    config.conv.assign(args.conv_layers ? args.conv_layers : 1, spec);
  }
  config.dropout_rate = args.train.dropout_rate;

  Vocab vocab;
  if (variant_uses_text(variant)) {
    vocab = Vocab::build(corpus, splits.train, config.vocab_size - 2);
    tokenize_corpus(corpus, vocab, config.max_post_len);
  }

  TrainConfig cfg = args.train;
  cfg.seed = args.seed;
  cfg.log_to_stderr = true;

  Rng rng(args.seed);
  Model model = build_model(variant, config, rng);
  model.vocab_words = vocab.words;
  model.split_seed = args.seed;

  auto [trained, history] = train(std::move(model), corpus, splits, cfg);
  save_checkpoint(trained, args.out_checkpoint);
  if (!args.history.empty()) write_history_csv(history, args.history);
  std::cerr << "best epoch " << history.best_epoch << " val MAE "
            << history.best_val_mae() << "\n";
  std::cout << "checkpoint written to " << args.out_checkpoint << "\n";
  return 0;
}

struct EvaluateArgs {
  std::string data;
  std::vector<std::string> checkpoints;
  std::vector<double> confidences{0.9, 0.95};
  std::vector<double> gamma_grid{0.5, 0.4, 0.3, 0.2, 0.1, 0.05};
  std::string out_dir = ".";
  std::uint64_t seed = 0;  // 0: use each checkpoint's stored split seed
};

int cmd_evaluate(const EvaluateArgs& args) {
  if (args.checkpoints.empty()) throw UsageError("--checkpoints needs at least one path");
  Corpus corpus = load_corpus(args.data);
  fs::create_directories(args.out_dir);

  std::vector<std::pair<std::string, PredictionLog>> logs;
  Corpus train_ref;  // natural-wait reference: the training split
  for (const std::string& path : args.checkpoints) {
    Model model = load_checkpoint(path);
    const std::uint64_t split_seed = args.seed ? args.seed : model.split_seed;
    const Dataset splits = split_cases(corpus, {0.8, 0.1, 0.1}, split_seed);
    if (variant_uses_text(model.variant)) {
      const Vocab vocab = Vocab::from_words(model.vocab_words);
      tokenize_corpus(corpus, vocab, model.config.max_post_len);
    }
    if (train_ref.empty())
      for (std::size_t idx : splits.train) train_ref.push_back(corpus[idx]);

    PredictionLog log;
    for (std::size_t idx : splits.test) {
      const CaseRecord& rec = corpus[idx];
      log.set_truth(rec.case_id, rec.total_donations);
      if (variant_uses_series(model.variant)) {
        const int span = std::min<int>(kPredictionDays, static_cast<int>(rec.series.cols));
        for (int d = 1; d <= span; ++d)
          log.add_prediction(rec.case_id, d, predict_day(model, rec, d));
      } else {
        const double yhat = predict_day(model, rec, 0);
        for (int d = 1; d <= kPredictionDays; ++d)
          log.add_prediction(rec.case_id, d, yhat);
      }
    }
    logs.emplace_back(variant_name(model.variant), std::move(log));
  }

  std::vector<std::pair<std::string, const PredictionLog*>> mae_inputs;
  for (const auto& [name, log] : logs) mae_inputs.emplace_back(name, &log);
  write_mae_csv(mae_inputs, (fs::path(args.out_dir) / "mae_by_day.csv").string());

  for (const auto& [name, log] : logs) {
    std::vector<TimelinessCurve> curves;
    for (double c : args.confidences) curves.push_back(timeliness_epsilon(log, c));
    write_timeliness_csv(
        curves, (fs::path(args.out_dir) / ("timeliness_" + name + ".csv")).string());
    const auto cells = saved_days_report(log, train_ref, args.gamma_grid, args.confidences);
    write_saved_days_csv(
        cells, (fs::path(args.out_dir) / ("saved_days_" + name + ".csv")).string());
    for (const auto& curve : curves) {
      if (!curve.skipped_days.empty())
        std::cerr << name << ": " << curve.skipped_days.size()
                  << " days had no valid case at confidence " << curve.confidence << "\n";
      if (curve.excluded_cases > 0)
        std::cerr << name << ": excluded " << curve.excluded_cases
                  << " zero-total case-days from percentage-error metrics at confidence "
                  << curve.confidence << "\n";
    }
  }
  std::cout << "evaluation CSVs written to " << args.out_dir << "\n";
  return 0;
}

struct ClusterArgs {
  std::string data;
  std::string k_range = "2..8";
  std::string K_range = "2..8";
  std::string out_dir = ".";
  std::uint64_t seed = 1;
  std::size_t subsample = 2000;
  bool normalize = false;
};

int cmd_cluster(const ClusterArgs& args) {
  const Range k = parse_range(args.k_range);
  const Range K = parse_range(args.K_range);
  const Corpus corpus = load_corpus(args.data);
  fs::create_directories(args.out_dir);
  Rng rng(args.seed);
  const TwoStepResult result = run_two_step_clustering(
      corpus, k.lo, k.hi, K.lo, K.hi, rng, args.subsample, args.normalize);
  write_centers_csv(result, (fs::path(args.out_dir) / "cluster_centers.csv").string());
  write_assignments_csv(corpus, result.assignment,
                        (fs::path(args.out_dir) / "assignments.csv").string());
  write_profile_csv(result.profile, (fs::path(args.out_dir) / "profile.csv").string());
  write_elbow_csv(result.elbow, (fs::path(args.out_dir) / "elbow.csv").string());
  for (std::size_t f = 0; f < kSeriesFeatures; ++f) {
    std::cerr << kSeriesFeatureNames[f] << ": k=" << result.per_feature[f].k
              << (result.per_feature[f].low_separation ? " (low separation)" : "")
              << "\n";
  }
  std::cerr << "case clusters: K=" << result.elbow.K
            << (result.elbow.no_elbow ? " (no clear elbow; smallest K reported)" : "")
            << "\n";
  std::cout << "clustering CSVs written to " << args.out_dir << "\n";
  return 0;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e)) return 2;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fundcast: daily crowdfunding-outcome forecasting, evaluation and "
               "temporal clustering"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "write a synthetic corpus");
  generate->set_config("--config", "", "flat key=value config file; flags override");
  generate->add_option("--n", gen.n, "number of cases")->capture_default_str();
  generate->add_option("--seed", gen.seed, "rng seed")->capture_default_str();
  generate->add_option("--out", gen.out, "output corpus path")->required();
  generate->add_option("--mix", gen.mix, "cluster mix (4 probabilities)")
      ->expected(4);

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train one model variant");
  train_cmd->set_config("--config", "", "flat key=value config file; flags override");
  train_cmd->add_option("--data", tr.data, "corpus path")
      ->required()
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--variant", tr.variant,
                        "lstm-cond | lstm-cond-partial | lstm-replicate | "
                        "lstm-concatenate | lstm-time-series | nn-time-invariant | "
                        "nn-time-invariant-no-text")
      ->required();
  train_cmd->add_option("--out-checkpoint", tr.out_checkpoint)->capture_default_str();
  train_cmd->add_option("--history", tr.history, "training history CSV path");
  train_cmd->add_option("--seed", tr.seed, "seed for split/init/training")
      ->capture_default_str();
  train_cmd->add_option("--lr", tr.train.learning_rate)->capture_default_str();
  train_cmd->add_option("--batch-size", tr.train.batch_size)->capture_default_str();
  train_cmd->add_option("--max-epochs", tr.train.max_epochs)->capture_default_str();
  train_cmd->add_option("--patience", tr.train.patience)->capture_default_str();
  train_cmd->add_option("--dropout", tr.train.dropout_rate)->capture_default_str();
  train_cmd->add_option("--clip-norm", tr.train.grad_clip_norm)->capture_default_str();
  train_cmd->add_option("--day-stride", tr.train.day_stride)->capture_default_str();
  train_cmd->add_option("--vocab-size", tr.vocab_size);
  train_cmd->add_option("--emb-dim", tr.emb_dim);
  train_cmd->add_option("--max-post-len", tr.max_post_len);
  train_cmd->add_option("--lstm-units", tr.lstm_units, "per-layer LSTM widths");
  train_cmd->add_option("--head-hidden", tr.head_hidden, "head hidden widths");
  train_cmd->add_option("--nn-hidden", tr.nn_hidden, "NN baseline hidden widths");
  train_cmd->add_option("--pre-dense", tr.pre_dense, "per-step dense widths");
  train_cmd->add_option("--conv-layers", tr.conv_layers);
  train_cmd->add_option("--conv-filters", tr.conv_filters);
  train_cmd->add_option("--conv-window", tr.conv_window);
  train_cmd->add_option("--conv-pool", tr.conv_pool);

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "evaluate trained checkpoints");
  evaluate->set_config("--config", "", "flat key=value config file; flags override");
  evaluate->add_option("--data", ev.data, "corpus path")
      ->required()
      ->check(CLI::ExistingFile);
  evaluate->add_option("--checkpoints", ev.checkpoints, "checkpoint paths")
      ->required()
      ->expected(-1)
      ->check(CLI::ExistingFile);
  evaluate->add_option("--confidence", ev.confidences, "confidence levels")
      ->expected(-1);
  evaluate->add_option("--gamma-grid", ev.gamma_grid, "percentage-error grid")
      ->expected(-1);
  evaluate->add_option("--out-dir", ev.out_dir)->capture_default_str();
  evaluate->add_option("--seed", ev.seed,
                       "split seed override (default: stored in checkpoint)");

  ClusterArgs cl;
  auto* cluster = app.add_subcommand("cluster", "two-step temporal clustering");
  cluster->set_config("--config", "", "flat key=value config file; flags override");
  cluster->add_option("--data", cl.data, "corpus path")
      ->required()
      ->check(CLI::ExistingFile);
  cluster->add_option("--k-range", cl.k_range, "per-feature k range, e.g. 2..8")
      ->capture_default_str();
  cluster->add_option("--K-range", cl.K_range, "case-cluster K range, e.g. 2..8")
      ->capture_default_str();
  cluster->add_option("--out-dir", cl.out_dir)->capture_default_str();
  cluster->add_option("--seed", cl.seed)->capture_default_str();
  cluster->add_option("--subsample", cl.subsample, "silhouette subsample limit")
      ->capture_default_str();
  cluster->add_flag("--normalize", cl.normalize,
                    "z-score each feature's series before clustering");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (generate->parsed()) return cmd_generate(gen);
    if (train_cmd->parsed()) return cmd_train(tr);
    if (evaluate->parsed()) return cmd_evaluate(ev);
    if (cluster->parsed()) return cmd_cluster(cl);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return 0;
}
