// immunokit command-line driver.
//
// Exit codes: 0 success, 2 usage or validation error, 3 numeric failure.
// Every run writes an INI snapshot of its fully resolved options beside its
// outputs; `immunokit --config <snapshot>` replays it.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "immunokit/assembly.hpp"
#include "immunokit/dynamics.hpp"
#include "immunokit/error.hpp"
#include "immunokit/metrics.hpp"
#include "immunokit/numcore/checkpoint.hpp"
#include "immunokit/pipeline/autoencoder.hpp"
#include "immunokit/pipeline/cnn.hpp"
#include "immunokit/pipeline/gan.hpp"
#include "immunokit/pipeline/selector.hpp"
#include "immunokit/predictor.hpp"
#include "immunokit/rng.hpp"
#include "immunokit/seqdata.hpp"
#include "immunokit/svg_plot.hpp"
#include "immunokit/textio.hpp"

namespace fs = std::filesystem;
using namespace immunokit;

namespace {

constexpr const char* kSnapshotName = "config.ini";

// Values for one option: what was given, else its default (vector
// defaults are rendered "[a,b]"). Empty when neither exists.
std::vector<std::string> resolved_values(const CLI::Option& opt) {
  if (opt.count() > 0) return opt.results();
  std::string def = opt.get_default_str();
  if (def.empty()) return {};
  if (def.size() >= 2 && def.front() == '[' && def.back() == ']') {
    std::vector<std::string> parts;
    for (auto part : split(std::string_view(def).substr(1, def.size() - 2), ',')) {
      parts.emplace_back(trim(part));
    }
    return parts;
  }
  return {def};
}

// INI section for the subcommand that ran, listing every option with a
// value; `immunokit --config <file>` replays it.
std::string config_snapshot(const CLI::App& sub) {
  std::ostringstream out;
  out << '[' << sub.get_name() << "]\n";
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt == sub.get_help_ptr() || opt->get_lnames().empty()) continue;
    const auto values = resolved_values(*opt);
    if (values.empty()) continue;
    std::string joined = CLI::detail::ini_join(values);
    if (values.size() == 1 && opt->get_items_expected_max() > 1) joined = "[" + joined + "]";
    out << opt->get_lnames().front() << '=' << joined << '\n';
  }
  return out.str();
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ValidationError("cannot create output directory " + dir.string());
}

template <typename Fn>
std::string render(Fn&& fn) {
  std::ostringstream out;
  fn(out);
  return out.str();
}

seqdata::RecordFormat resolve_format(const std::string& name, const fs::path& path) {
  return name.empty() ? seqdata::format_from_path(path) : seqdata::parse_record_format(name);
}

// ---------------------------------------------------------------- gen

struct GenOptions {
  seqdata::SyntheticSpec spec;
  std::string format;
  fs::path out;
};

void run_gen(const GenOptions& o, const CLI::App& app) {
  const auto data = seqdata::generate_synthetic(o.spec);
  if (o.out.has_parent_path()) ensure_dir(o.out.parent_path());
  write_file(o.out, seqdata::records_to_string(data.records, resolve_format(o.format, o.out)));
  write_file(fs::path(o.out.string() + "." + kSnapshotName), config_snapshot(app));
  std::cout << "wrote " << data.size() << " records to " << o.out.string() << '\n';
}

CLI::App* add_gen(CLI::App& app, GenOptions& o) {
  auto* sub = app.add_subcommand("gen", "Generate a synthetic epitope corpus with a planted motif");
  sub->add_option("--n", o.spec.n, "Number of records")->capture_default_str();
  sub->add_option("--motif", o.spec.motif, "Planted motif")->capture_default_str();
  sub->add_option("--signal", o.spec.signal_strength, "Signal strength in [0.5, 1]")
      ->capture_default_str();
  sub->add_option("--length", o.spec.peptide_length, "Peptide length (8-15)")->capture_default_str();
  sub->add_option("--seed", o.spec.seed, "Random seed")->required();
  sub->add_option("--format", o.format, "csv or jsonl (default: from the file extension)");
  sub->add_option("--out", o.out, "Output file")->required();
  return sub;
}

// ---------------------------------------------------------------- train

struct TrainOptions {
  std::string model = "model1";
  fs::path data;
  std::string format;
  double train_fraction = 0.8;
  std::optional<std::uint64_t> split_seed;
  TrainConfig cfg;
  std::size_t latent_dim = 32;
  bool linear_codec = false;
  std::size_t candidates = 4;
  fs::path out;
};

void print_final(const TrainReport& report) {
  const std::size_t b = report.best_epoch;
  std::cout << "final: epochs=" << report.epochs_run() << " best_epoch=" << b
            << " train_loss=" << format_number(report.train_loss[b])
            << " val_loss=" << format_number(report.val_loss[b])
            << " train_acc=" << format_number(report.train_accuracy[b])
            << " val_acc=" << format_number(report.val_accuracy[b]) << '\n';
}

void write_report_files(const fs::path& out, const TrainReport& report) {
  write_file(out / "report.csv", render([&](std::ostream& s) { write_report_csv(s, report); }));
  write_file(out / "summary.json", report_summary(report).dump(2) + "\n");
}

void run_train(TrainOptions o, const CLI::App& app) {
  auto data = seqdata::load_records(o.data, resolve_format(o.format, o.data));
  data = seqdata::split_dataset(std::move(data), o.train_fraction, o.split_seed.value_or(o.cfg.seed));
  ensure_dir(o.out);
  const fs::path ckpt = o.out / "checkpoint";

  if (o.model == "model1") {
    predictor::Model1Config model;
    const auto report = predictor::train_model1(data, o.cfg, model);
    model.dropout = o.cfg.dropout;
    model.init_seed = o.cfg.seed;
    predictor::save_predictor(ckpt, predictor::EpitopePredictor(model, report.best_checkpoint),
                              o.cfg.adam);
    write_report_files(o.out, report);
    print_final(report);
  } else if (o.model == "cnn") {
    pipeline::CnnConfig model;
    const auto report = pipeline::train_cnn_classifier(data, o.cfg, model);
    model.dropout = o.cfg.dropout;
    model.init_seed = o.cfg.seed;
    pipeline::save_cnn(ckpt, pipeline::CnnClassifier(model, report.best_checkpoint), o.cfg.adam);
    write_report_files(o.out, report);
    print_final(report);
  } else if (o.model == "autoencoder") {
    pipeline::AutoencoderConfig model;
    model.linear_codec = o.linear_codec;
    const auto report = pipeline::train_autoencoder_selector(data, o.latent_dim, o.cfg, model);
    model.latent_dim = o.latent_dim;
    model.init_seed = o.cfg.seed;
    pipeline::save_autoencoder(ckpt, pipeline::AutoencoderSelector(model, report.best_checkpoint),
                               o.cfg.adam);
    write_report_files(o.out, report);
    print_final(report);
  } else {
    std::vector<seqdata::Peptide> positives, held_out;
    for (const auto& r : data.train_records()) {
      if (r.immunogenic) positives.push_back(r.peptide);
    }
    for (const auto& r : data.test_records()) {
      if (r.immunogenic) held_out.push_back(r.peptide);
    }
    const auto run = pipeline::train_gan(positives, o.cfg);
    pipeline::save_gan(ckpt, run.model, o.cfg.adam);
    write_file(o.out / "gan_log.csv",
               render([&](std::ostream& s) { pipeline::write_gan_log_csv(s, run.report); }));
    const auto samples = pipeline::generate_candidates(run.model, o.candidates, derive_seed(o.cfg.seed, 1));
    write_file(o.out / "candidates.fasta",
               render([&](std::ostream& s) { pipeline::write_samples_fasta(s, samples); }));
    nlohmann::ordered_json summary;
    summary["epochs_run"] = run.report.d_loss.size();
    summary["final_d_loss"] = run.report.d_loss.back();
    summary["final_g_loss"] = run.report.g_loss.back();
    if (!held_out.empty()) {
      const auto fakes =
          pipeline::sample_training_style(run.model, held_out.size(), derive_seed(o.cfg.seed, 2));
      summary["discriminator_probe_accuracy"] =
          pipeline::discriminator_accuracy(run.model, held_out, fakes);
    }
    write_file(o.out / "summary.json", summary.dump(2) + "\n");
    std::cout << "final: epochs=" << run.report.d_loss.size()
              << " d_loss=" << format_number(run.report.d_loss.back())
              << " g_loss=" << format_number(run.report.g_loss.back()) << '\n';
  }
  write_file(o.out / "test.csv",
             seqdata::records_to_string(data.test_records(), seqdata::RecordFormat::csv));
  write_file(o.out / kSnapshotName, config_snapshot(app));
}

CLI::App* add_train(CLI::App& app, TrainOptions& o) {
  auto* sub = app.add_subcommand("train", "Train a model and write its checkpoint and report");
  sub->add_option("--model", o.model, "model1, cnn, autoencoder or gan")
      ->check(CLI::IsMember({"model1", "cnn", "autoencoder", "gan"}))
      ->capture_default_str();
  sub->add_option("--data", o.data, "Labeled records (CSV or JSONL)")->required();
  sub->add_option("--format", o.format, "csv or jsonl (default: from the file extension)");
  sub->add_option("--train-fraction", o.train_fraction, "Training share of the split")
      ->capture_default_str();
  sub->add_option("--split-seed", o.split_seed, "Split seed (default: --seed)");
  sub->add_option("--seed", o.cfg.seed, "Random seed")->required();
  sub->add_option("--epochs", o.cfg.epochs, "Epoch budget")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--patience", o.cfg.patience, "Early-stopping patience; 0 disables")
      ->capture_default_str();
  sub->add_option("--tolerance", o.cfg.tolerance, "Minimum validation-loss improvement")
      ->capture_default_str();
  sub->add_option("--batch-size", o.cfg.batch_size, "Minibatch size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--lr", o.cfg.adam.learning_rate, "Adam learning rate")->capture_default_str();
  sub->add_option("--dropout", o.cfg.dropout, "Dropout rate")->capture_default_str();
  sub->add_option("--alpha", o.cfg.weights.alpha, "Affinity / reconstruction loss weight")
      ->capture_default_str();
  sub->add_option("--beta", o.cfg.weights.beta, "Immunogenicity loss weight")->capture_default_str();
  sub->add_option("--gamma", o.cfg.weights.gamma, "Conservation loss weight")->capture_default_str();
  sub->add_option("--latent-dim", o.latent_dim, "Autoencoder latent width")->capture_default_str();
  sub->add_flag("--linear-codec", o.linear_codec, "Autoencoder without the tanh encoder");
  sub->add_option("--candidates", o.candidates, "GAN candidates to write")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--out", o.out, "Output directory")->required();
  return sub;
}

// ---------------------------------------------------------------- eval

struct EvalOptions {
  fs::path checkpoint;
  fs::path data;
  std::string format;
  std::vector<std::size_t> from_counts;
  double threshold = 0.5;
  std::size_t points = 100;
  fs::path out;
};

std::vector<double> model_probabilities(const fs::path& dir,
                                        const std::vector<seqdata::EpitopeRecord>& records) {
  const std::string kind = nn::load_checkpoint(dir).metadata.value("model", std::string());
  std::vector<double> probs;
  probs.reserve(records.size());
  if (kind == "transformer_multitask") {
    const auto model = predictor::load_predictor(dir);
    for (const auto& r : records) probs.push_back(model.predict(r.peptide).immunogenicity_prob);
  } else if (kind == "cnn_classifier") {
    const auto model = pipeline::load_cnn(dir);
    for (const auto& r : records) probs.push_back(model.probability(r.peptide));
  } else if (kind == "autoencoder_selector") {
    const auto model = pipeline::load_autoencoder(dir);
    for (const auto& r : records) probs.push_back(model.read(r.peptide).immunogenicity);
  } else {
    throw ValidationError("checkpoint in " + dir.string() + " holds no classifier");
  }
  return probs;
}

void run_eval(const EvalOptions& o, const CLI::App& app) {
  ensure_dir(o.out);
  metrics::ConfusionMatrix cm;
  std::optional<double> auc;
  if (!o.from_counts.empty()) {
    cm = {o.from_counts[0], o.from_counts[1], o.from_counts[2], o.from_counts[3]};
  } else {
    if (o.data.empty()) throw ValidationError("eval needs --data or --from-counts");
    const auto records = seqdata::load_records(o.data, resolve_format(o.format, o.data)).records;
    if (records.empty()) throw ValidationError("no records to evaluate");
    std::vector<int> labels;
    std::vector<double> probs;
    for (const auto& r : records) labels.push_back(r.immunogenic);
    if (!o.checkpoint.empty()) {
      probs = model_probabilities(o.checkpoint, records);
    } else {
      for (const auto& r : records) {
        if (!r.score) {
          throw ValidationError("record " + r.peptide.str() + " has no score and no --checkpoint was given");
        }
        probs.push_back(*r.score);
      }
    }
    cm = metrics::confusion(labels, probs, o.threshold);
    const bool has_pos = cm.tp + cm.fn > 0, has_neg = cm.tn + cm.fp > 0;
    if (has_pos && has_neg) {
      auc = metrics::roc_auc(labels, probs);
      write_file(o.out / "roc.csv", render([&](std::ostream& s) {
                   metrics::write_roc_csv(s, metrics::roc_curve(labels, probs));
                 }));
    }
    if (has_pos) {
      write_file(o.out / "pr.csv", render([&](std::ostream& s) {
                   metrics::write_pr_csv(s, metrics::pr_curve(labels, probs, o.points));
                 }));
    }
  }
  const auto report = metrics::metrics_json(cm, auc);
  write_file(o.out / "metrics.json", report.dump(2) + "\n");
  write_file(o.out / "confusion.csv",
             render([&](std::ostream& s) { metrics::write_confusion_csv(s, cm); }));
  write_file(o.out / kSnapshotName, config_snapshot(app));
  std::cout << report.dump() << '\n';
}

CLI::App* add_eval(CLI::App& app, EvalOptions& o) {
  auto* sub = app.add_subcommand("eval", "Confusion matrix, derived metrics and ROC/PR curves");
  sub->add_option("--checkpoint", o.checkpoint, "Model checkpoint (default: use record scores)");
  sub->add_option("--data", o.data, "Labeled records");
  sub->add_option("--format", o.format, "csv or jsonl (default: from the file extension)");
  sub->add_option("--from-counts", o.from_counts, "tp tn fp fn")->expected(4);
  sub->add_option("--threshold", o.threshold, "Positive-call threshold")->capture_default_str();
  sub->add_option("--points", o.points, "Precision-recall curve points")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--out", o.out, "Output directory")->required();
  return sub;
}

// ---------------------------------------------------------------- rank / assemble

struct RankOptions {
  fs::path data;
  std::string format;
  fs::path selector;
  pipeline::SelectorWeights weights;
  fs::path out;
};

std::vector<pipeline::SelectorScore> score_pool(const RankOptions& o) {
  const auto records = seqdata::load_records(o.data, resolve_format(o.format, o.data)).records;
  if (o.selector.empty()) return pipeline::score_epitopes(nullptr, records, o.weights);
  const auto selector = pipeline::load_autoencoder(o.selector);
  return pipeline::score_epitopes(&selector, records, o.weights);
}

void add_scoring_options(CLI::App* sub, RankOptions& o) {
  sub->add_option("--data", o.data, "Epitope records")->required();
  sub->add_option("--format", o.format, "csv or jsonl (default: from the file extension)");
  sub->add_option("--selector", o.selector, "Autoencoder selector checkpoint");
  sub->add_option("--w-imm", o.weights.immunogenicity, "Immunogenicity weight")
      ->capture_default_str();
  sub->add_option("--w-cons", o.weights.conservation, "Conservation weight")->capture_default_str();
  sub->add_option("--w-rec", o.weights.reconstruction, "Reconstruction-error penalty weight")
      ->capture_default_str();
  sub->add_option("--out", o.out, "Output directory")->required();
}

void run_rank(const RankOptions& o, const CLI::App& app) {
  const auto scores = score_pool(o);
  ensure_dir(o.out);
  const auto csv = render([&](std::ostream& s) { pipeline::write_scores_csv(s, scores); });
  write_file(o.out / "ranked.csv", csv);
  write_file(o.out / kSnapshotName, config_snapshot(app));
  std::cout << csv;
}

struct AssembleOptions {
  RankOptions scoring;
  std::size_t k = 4;
  std::vector<std::string> require{"A2", "A3", "B7"};
  fs::path allele_map;
};

void run_assemble(const AssembleOptions& o, const CLI::App& app) {
  assembly::SupertypeRequirement req;
  req.required = {o.require.begin(), o.require.end()};
  if (!o.allele_map.empty()) req.allele_map.merge(assembly::AlleleMap::load(o.allele_map));
  const auto candidate = assembly::assemble(score_pool(o.scoring), req, o.k);
  ensure_dir(o.scoring.out);
  const auto report = assembly::coverage_report(candidate);
  write_file(o.scoring.out / "candidate.json", assembly::candidate_json(candidate).dump(2) + "\n");
  write_file(o.scoring.out / "coverage.txt", report);
  write_file(o.scoring.out / kSnapshotName, config_snapshot(app));
  std::cout << report;
}

// ---------------------------------------------------------------- simulate / sweep

struct ProliferationOptions {
  dynamics::ProliferationParams params;
  std::optional<double> k_ex;
  double n_ex = 2.0;

  dynamics::ProliferationParams resolve(std::optional<double> days) const {
    auto p = params;
    if (days) p.duration_days = *days;
    if (k_ex) p.exhaustion = dynamics::Exhaustion{*k_ex, n_ex};
    return p;
  }
};

void add_proliferation_options(CLI::App* sub, ProliferationOptions& o) {
  sub->add_option("--rho", o.params.rho, "Maximum proliferation rate (1/day)")->capture_default_str();
  sub->add_option("--t0", o.params.t0_cells, "Initial T cells")->capture_default_str();
  sub->add_option("--k-ex", o.k_ex, "Exhaustion half-suppression antigen level (enables exhaustion)");
  sub->add_option("--n-ex", o.n_ex, "Exhaustion Hill exponent")->capture_default_str();
}

struct SimulateOptions {
  std::string model = "cd8";
  ProliferationOptions prolif;
  double antigen = 1.0;
  dynamics::Cd8Params cd8;
  dynamics::ImmuneState initial = dynamics::kDefaultCd8Initial;
  std::optional<double> days;
  double step = dynamics::kDefaultStep;
  double detection_limit = 1e-3;
  bool check_convergence = false;
  bool svg = false;
  fs::path out;
};

void run_simulate(const SimulateOptions& o, const CLI::App& app) {
  ensure_dir(o.out);
  dynamics::Trajectory traj;
  const bool cd8 = o.model == "cd8";
  if (cd8) {
    auto initial = o.initial;
    initial.t_cells = o.prolif.params.t0_cells;
    traj = dynamics::simulate_cd8(o.cd8, initial, o.days.value_or(dynamics::kDefaultCd8Days), o.step);
  } else {
    auto p = o.prolif.resolve(o.days);
    p.step = o.step;
    traj = dynamics::simulate_proliferation(p, o.antigen);
  }
  write_file(o.out / "trajectory.csv",
             render([&](std::ostream& s) { dynamics::write_trajectory_csv(s, traj, cd8); }));
  if (o.svg) {
    std::vector<plot::Series> series;
    auto column = [&](const char* label, auto get) {
      plot::Series s{label, traj.times, {}};
      for (const auto& st : traj.states) s.y.push_back(get(st));
      series.push_back(std::move(s));
    };
    column("T", [](const dynamics::ImmuneState& s) { return s.t_cells; });
    if (cd8) {
      column("I", [](const dynamics::ImmuneState& s) { return s.infected; });
      column("E", [](const dynamics::ImmuneState& s) { return s.effectors; });
      column("V", [](const dynamics::ImmuneState& s) { return s.virus; });
    }
    write_file(o.out / "trajectory.svg",
               plot::render_svg(series, {cd8 ? "CD8+ response" : "T-cell proliferation", "days",
                                         cd8 ? "concentration" : "T cells"}));
  }
  const auto& last = traj.states.back();
  std::cout << "t=" << format_number(traj.times.back()) << " T=" << format_number(last.t_cells);
  if (cd8) {
    std::cout << " I=" << format_number(last.infected) << " E=" << format_number(last.effectors)
              << " V=" << format_number(last.virus);
    if (traj.size() >= 10) {
      std::cout << " outcome=" << dynamics::to_string(dynamics::classify_outcome(traj, o.detection_limit));
    }
  }
  std::cout << '\n';
  if (o.check_convergence) {
    if (!cd8) throw ValidationError("--check-convergence applies to the cd8 model");
    auto initial = o.initial;
    initial.t_cells = o.prolif.params.t0_cells;
    const auto c = dynamics::cd8_convergence(o.cd8, initial,
                                             o.days.value_or(dynamics::kDefaultCd8Days), o.step);
    std::cout << "convergence step=" << format_number(c.step) << " error=" << format_number(c.error_coarse)
              << " half_step_error=" << format_number(c.error_fine)
              << " ratio=" << format_number(c.ratio) << '\n';
  }
  write_file(o.out / kSnapshotName, config_snapshot(app));
}

CLI::App* add_simulate(CLI::App& app, SimulateOptions& o) {
  auto* sub = app.add_subcommand("simulate", "Integrate the CD8 response or proliferation model");
  sub->add_option("--model", o.model, "cd8 or proliferation")
      ->check(CLI::IsMember({"cd8", "proliferation"}))
      ->capture_default_str();
  add_proliferation_options(sub, o.prolif);
  sub->add_option("--h", o.prolif.params.h, "Half-saturation antigen level")->capture_default_str();
  sub->add_option("--antigen", o.antigen, "Constant antigen level")->capture_default_str();
  sub->add_option("--beta-t", o.cd8.beta_T, "Infection rate")->capture_default_str();
  sub->add_option("--beta-tv", o.cd8.beta_TV, "T-cell stimulation by viral load")->capture_default_str();
  sub->add_option("--p", o.cd8.p, "Virus production per infected cell")->capture_default_str();
  sub->add_option("--k-ie", o.cd8.k_IE, "Killing rate of infected cells")->capture_default_str();
  sub->add_option("--rho-i", o.cd8.rho_I, "Effector stimulation by infected cells")->capture_default_str();
  sub->add_option("--c-v", o.cd8.c_v, "Virus clearance rate")->capture_default_str();
  sub->add_option("--i0", o.initial.infected, "Initial infected cells")->capture_default_str();
  sub->add_option("--e0", o.initial.effectors, "Initial effectors")->capture_default_str();
  sub->add_option("--v0", o.initial.virus, "Initial virus")->capture_default_str();
  sub->add_option("--days", o.days, "Duration (default 30 for cd8, 7 for proliferation)");
  sub->add_option("--step", o.step, "RK4 step in days")->capture_default_str();
  sub->add_option("--detection-limit", o.detection_limit, "Virus detection limit")->capture_default_str();
  sub->add_flag("--check-convergence", o.check_convergence,
                "Also run step and step/2 against a step/16 reference and print the error ratio");
  sub->add_flag("--svg", o.svg, "Also write trajectory.svg");
  sub->add_option("--out", o.out, "Output directory")->required();
  return sub;
}

struct SweepOptions {
  ProliferationOptions prolif;
  std::vector<double> h{0.01, 0.1};
  double days = 7.0;
  double grid_min = 1e-4;
  double grid_max = 10.0;
  std::size_t grid_points = 41;
  bool svg = false;
  fs::path out;
};

std::vector<double> log_grid(double lo, double hi, std::size_t n) {
  if (!(lo > 0.0 && hi > lo) || n < 2) {
    throw ValidationError("antigen grid needs 0 < grid-min < grid-max and at least 2 points");
  }
  std::vector<double> grid(n);
  const double a = std::log10(lo), b = std::log10(hi);
  for (std::size_t i = 0; i < n; ++i) {
    grid[i] = std::pow(10.0, a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
  }
  return grid;
}

void run_sweep(const SweepOptions& o, const CLI::App& app) {
  const auto grid = log_grid(o.grid_min, o.grid_max, o.grid_points);
  ensure_dir(o.out);
  std::vector<plot::Series> series;
  for (double h : o.h) {
    auto p = o.prolif.resolve(o.days);
    p.h = h;
    const auto sweep = dynamics::dose_sweep(p, grid);
    write_file(o.out / ("sweep_h" + format_number(h) + ".csv"),
               render([&](std::ostream& s) { dynamics::write_sweep_csv(s, sweep); }));
    const auto half = dynamics::half_response_antigen(sweep, p.t0_cells);
    std::cout << "h=" << format_number(h) << " final_T_max=" << format_number(sweep.back().final_t_cells)
              << " half_response_antigen=" << (half ? format_number(*half) : std::string("none"))
              << '\n';
    plot::Series s{"h = " + format_number(h), {}, {}};
    for (const auto& pt : sweep) {
      s.x.push_back(pt.antigen);
      s.y.push_back(pt.final_t_cells);
    }
    series.push_back(std::move(s));
  }
  if (o.svg) {
    plot::PlotOptions opt{"T cells after " + format_number(o.days) + " days", "antigen",
                          "final T cells"};
    opt.log_x = true;
    opt.log_y = true;
    write_file(o.out / "dose_response.svg", plot::render_svg(series, opt));
  }
  write_file(o.out / kSnapshotName, config_snapshot(app));
}

CLI::App* add_sweep(CLI::App& app, SweepOptions& o) {
  auto* sub = app.add_subcommand("sweep", "Final T-cell count over a log-spaced antigen grid");
  add_proliferation_options(sub, o.prolif);
  sub->add_option("--h", o.h, "Half-saturation constant; repeat for several curves")
      ->capture_default_str();
  sub->add_option("--days", o.days, "Duration in days")->capture_default_str();
  sub->add_option("--grid-min", o.grid_min, "Smallest antigen level")->capture_default_str();
  sub->add_option("--grid-max", o.grid_max, "Largest antigen level")->capture_default_str();
  sub->add_option("--grid-points", o.grid_points, "Grid size")->capture_default_str();
  sub->add_flag("--svg", o.svg, "Also write dose_response.svg");
  sub->add_option("--out", o.out, "Output directory")->required();
  return sub;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"immunokit: epitope prediction, vaccine assembly and immune dynamics"};
  app.set_help_flag("--help", "Print this help message and exit");
  app.set_config("--config", "", "INI file of options; a run's config.ini replays it");
  app.require_subcommand(1);

  GenOptions gen;
  TrainOptions train;
  EvalOptions eval;
  RankOptions rank;
  AssembleOptions assemble;
  SimulateOptions simulate;
  SweepOptions sweep;

  auto* gen_cmd = add_gen(app, gen);
  auto* train_cmd = add_train(app, train);
  auto* eval_cmd = add_eval(app, eval);
  auto* rank_cmd = app.add_subcommand("rank", "Score and rank epitopes");
  add_scoring_options(rank_cmd, rank);
  auto* assemble_cmd = app.add_subcommand("assemble", "Select a supertype-covering epitope set");
  add_scoring_options(assemble_cmd, assemble.scoring);
  assemble_cmd->add_option("--k", assemble.k, "Maximum epitope count")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  assemble_cmd->add_option("--require", assemble.require, "Required supertypes")
      ->delimiter(',')
      ->capture_default_str();
  assemble_cmd->add_option("--allele-map", assemble.allele_map,
                           "CSV `allele,supertype` merged over the bundled table");
  auto* simulate_cmd = add_simulate(app, simulate);
  auto* sweep_cmd = add_sweep(app, sweep);
  for (auto* sub : app.get_subcommands({})) sub->configurable();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen_cmd->parsed()) run_gen(gen, *gen_cmd);
    if (train_cmd->parsed()) run_train(train, *train_cmd);
    if (eval_cmd->parsed()) run_eval(eval, *eval_cmd);
    if (rank_cmd->parsed()) run_rank(rank, *rank_cmd);
    if (assemble_cmd->parsed()) run_assemble(assemble, *assemble_cmd);
    if (simulate_cmd->parsed()) run_simulate(simulate, *simulate_cmd);
    if (sweep_cmd->parsed()) run_sweep(sweep, *sweep_cmd);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
