// Command-line front end: data generation, training, evaluation, gradient
// checks, inspection dumps and the ablation table.
//
// Failures print one line to stderr, "error\t<kind>\t<message>", and exit 1;
// usage errors exit 2.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "spaconet/diagnostics.hpp"
#include "spaconet/io.hpp"
#include "spaconet/synthetic.hpp"
#include "spaconet/training.hpp"

using namespace spaconet;
namespace fs = std::filesystem;

namespace {

std::string one_line(std::string s) {
  for (char& ch : s)
    if (ch == '\n' || ch == '\r' || ch == '\t') ch = ' ';
  return s;
}

std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// Loss and accuracy at full precision so logs compare byte for byte.
std::string metrics_line(const EpochMetrics& m) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s\t%zu\t%.17g\t%.17g\n", m.phase.c_str(), m.epoch, m.loss, m.accuracy);
  return buf;
}

constexpr const char* kMetricsHeader = "phase\tepoch\tloss\taccuracy\n";

RunConfig load_config(const std::string& path) {
  return path.empty() ? RunConfig{} : io::read_run_config(path);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create directory " + dir.string() + ": " + ec.message());
}

// ---- gen-data ---------------------------------------------------------------

struct GenArgs {
  std::string out, config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n_train, n_test;
};

void gen_data(const GenArgs& a) {
  io::GenerateOptions opt = a.config.empty() ? io::GenerateOptions{} : io::parse_generate_options(io::read_file(a.config));
  if (a.seed) opt.spec.seed = *a.seed;
  if (a.n_train) opt.n_train = *a.n_train;
  if (a.n_test) opt.n_test = *a.n_test;
  ensure_dir(a.out);
  io::write_generated(a.out, generate_dataset(opt.spec, opt.n_train, opt.n_test));
  io::atomic_write(fs::path(a.out) / "generate.conf", io::format_generate_options(opt));
  std::cout << "train\t" << opt.n_train << "\ntest\t" << opt.n_test << "\n";
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string config, train, out, init;
  std::string stage = "all";
};

void train(const TrainArgs& a) {
  const fs::path out(a.out);
  ensure_dir(out);
  RunConfig config = load_config(a.config);
  std::optional<io::Checkpoint> init;
  if (!a.init.empty()) init = io::read_checkpoint(a.init);
  if (a.stage == "2" && !init) fail(ErrorKind::argument, "--stage 2 needs --init <stage-1 checkpoint>");
  if (a.stage != "2" && init) fail(ErrorKind::argument, "--init only applies to --stage 2");

  const Dataset data = io::load_dataset(io::read_manifest(a.train));
  if (data.classes != config.model.classes || data.objects != config.model.objects) {
    fail(ErrorKind::config, "key 'classes'/'objects': manifest has classes=" + std::to_string(data.classes) +
                                " objects=" + std::to_string(data.objects));
  }
  io::atomic_write(out / "run.conf", io::format_run_config(config));

  Rng rng(config.seed);
  SpacoNet model(config.model, rng);
  if (init) io::restore(model, *init);

  std::string log = kMetricsHeader;
  std::cout << kMetricsHeader;
  const MetricsSink sink = [&](const EpochMetrics& m) {
    const std::string line = metrics_line(m);
    log += line;
    std::cout << line << std::flush;
  };

  if (a.stage != "2") {
    const Stage1Result r = train_stage1(model, data, config.stage1, sink);
    io::write_checkpoint(out / "stage1.ckpt", io::capture(model, config, 1, r.ssrm.epochs, r.ssrm));
  }
  if (a.stage != "1") {
    const TrainState s = train_stage2(model, data, config.stage2, sink);
    io::write_checkpoint(out / "model.ckpt", io::capture(model, config, 2, s.epochs, s));
  }
  io::atomic_write(out / "metrics.tsv", log);
}

// ---- eval -------------------------------------------------------------------

SpacoNet model_from(const io::Checkpoint& ck) {
  Rng rng(ck.config.seed);
  SpacoNet model(ck.config.model, rng);
  io::restore(model, ck);
  return model;
}

struct EvalArgs {
  std::string checkpoint, data, predictions;
};

void eval(const EvalArgs& a) {
  const io::Checkpoint ck = io::read_checkpoint(a.checkpoint);
  SpacoNet model = model_from(ck);
  const Dataset data = io::load_dataset(io::read_manifest(a.data));
  const std::vector<SceneLabel> p = predict(model, data);
  const double acc = top1_accuracy(p, data.labels);
  std::string out = "index\tlabel\tpredicted\n";
  for (std::size_t i = 0; i < p.size(); ++i)
    out += std::to_string(i) + "\t" + std::to_string(data.labels[i]) + "\t" + std::to_string(p[i]) + "\n";
  const fs::path pred = a.predictions.empty() ? fs::path(a.checkpoint + ".predictions.tsv") : fs::path(a.predictions);
  io::atomic_write(pred, out);
  std::cout << "accuracy\t" << fixed6(acc) << "\n";
}

// ---- grad-check -------------------------------------------------------------

struct GradArgs {
  std::string config;
  GradSuiteOptions options;
};

bool grad(GradArgs a, const CLI::App& cmd, bool verbose) {
  if (!a.config.empty()) {
    const RunConfig c = io::read_run_config(a.config);
    // Explicit flags win over the file.
    if (cmd.count("--channels") == 0) a.options.channels = c.model.channels;
    if (cmd.count("--objects") == 0) a.options.objects = c.model.objects;
    if (cmd.count("--classes") == 0) a.options.classes = c.model.classes;
    if (cmd.count("--heads") == 0) a.options.heads = c.model.heads;
    if (cmd.count("--seed") == 0) a.options.seed = c.seed;
  }
  bool ok = true;
  std::cout << "module\tprobes\tskipped\tmax_rel_err\tresult\n";
  for (const ModuleCheck& m : run_grad_suite(a.options)) {
    char err[32];
    std::snprintf(err, sizeof err, "%.3e", m.report.max_rel_error());
    std::cout << m.module << "\t" << m.report.checked() << "\t" << m.report.skipped() << "\t" << err << "\t"
              << (m.passed ? "PASS" : "FAIL") << "\n";
    ok = ok && m.passed;
    if (verbose) {
      for (const auto& e : m.report.entries) {
        std::printf("  %s\t%zu\t%zu\t%.3e\t[%zu] analytic %.9e numeric %.9e\n", e.name.c_str(), e.checked, e.skipped,
                    e.max_rel_error, e.worst_index, e.worst_analytic, e.worst_numeric);
      }
    }
  }
  return ok;
}

// ---- inspect ----------------------------------------------------------------

struct InspectArgs {
  std::string checkpoint, data, out;
  std::size_t index = 0;
};

void inspect(const InspectArgs& a) {
  const io::Checkpoint ck = io::read_checkpoint(a.checkpoint);
  SpacoNet model = model_from(ck);
  if (model.config().variant == Variant::baseline || model.config().variant == Variant::ssrm) {
    fail(ErrorKind::config, "key 'variant': inspect needs a variant with the GLDM (encoder or full)");
  }
  const Dataset data = io::load_dataset(io::read_manifest(a.data));
  if (a.index >= data.size()) {
    fail(ErrorKind::argument, "sample index " + std::to_string(a.index) + " outside [0, " +
                                  std::to_string(data.size()) + ")");
  }
  const fs::path out(a.out);
  ensure_dir(out);
  const NodeFeatures f = model.features(data.samples[a.index]);
  Rng unused(0);
  const Tensor logits = model.logits(f, ops::Mode::eval, unused);

  std::vector<std::string> written;
  auto put = [&](const std::string& name, const Tensor& t) {
    io::write_tensor(out / name, t, io::DType::f64);
    written.push_back(name);
  };
  io::write_labels(out / "labels.spc", f.labels);
  written.push_back("labels.spc");
  put("image_features.spc", f.image.data);
  put("spatial_features.spc", f.spatial.data);
  put("rgb_sequence.spc", f.rgb.data);
  put("spa_sequence.spc", f.spa.data);
  const Gldm& g = model.gldm;
  auto heads = [&](const std::string& prefix, const MultiHeadSelfAttention& m) {
    for (std::size_t h = 0; h < m.attention().size(); ++h)
      put(prefix + ".head" + std::to_string(h) + ".spc", m.attention()[h]);
  };
  heads("attention.encoder_rgb", g.encoder_rgb.msa);
  heads("attention.encoder_spa", g.encoder_spa.msa);
  if (g.decoder_layers() > 0) heads("attention.decoder", g.decoder.msa);
  put("merged.spc", g.merged());
  put("f_o.spc", extract_global_node(g.decoded()));
  put("logits.spc", logits);
  for (const auto& name : written) std::cout << (out / name).string() << "\n";
}

// ---- ablate -----------------------------------------------------------------

struct AblateArgs {
  std::string config, train, test, out, metrics;
};

void ablate(const AblateArgs& a) {
  const RunConfig config = load_config(a.config);
  const Dataset train = io::load_dataset(io::read_manifest(a.train));
  const Dataset test = io::load_dataset(io::read_manifest(a.test));
  std::string log = kMetricsHeader;
  const AblationReport report =
      ablation_suite(train, test, config, [&](const EpochMetrics& m) { log += metrics_line(m); });
  std::string table = "row\tvariant\taccuracy\n";
  for (const auto& row : report.rows) table += row.name + "\t" + to_string(row.variant) + "\t" + fixed6(row.accuracy) + "\n";
  std::cout << table;
  if (!a.out.empty()) {
    io::atomic_write(a.out, table);
    io::atomic_write(fs::path(a.out).replace_extension(".conf"), io::format_run_config(config));
  }
  if (!a.metrics.empty()) io::atomic_write(a.metrics, log);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatial-context scene recognition toolkit"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic confounded corpus");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--config", gen.config, "Generator options file (seed, noise, spread, n_train, n_test)");
  gen_cmd->add_option("--seed", gen.seed);
  gen_cmd->add_option("--n-train", gen.n_train);
  gen_cmd->add_option("--n-test", gen.n_test);

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Two-stage training; writes checkpoints and metrics.tsv");
  train_cmd->add_option("--config", tr.config, "Run config file");
  train_cmd->add_option("--train", tr.train, "Training manifest")->required();
  train_cmd->add_option("--out", tr.out, "Output directory")->required();
  train_cmd->add_option("--stage", tr.stage, "1, 2 or all")->check(CLI::IsMember({"1", "2", "all"}));
  train_cmd->add_option("--init", tr.init, "Stage-1 checkpoint to start stage 2 from");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Top-1 accuracy of a checkpoint on a manifest");
  eval_cmd->add_option("--checkpoint", ev.checkpoint)->required();
  eval_cmd->add_option("--data", ev.data, "Manifest")->required();
  eval_cmd->add_option("--predictions", ev.predictions, "Per-sample prediction file");

  GradArgs gr;
  auto* grad_cmd = app.add_subcommand("grad-check", "Finite-difference gradient checks per module");
  grad_cmd->add_option("--config", gr.config, "Run config file supplying model dimensions and seed");
  grad_cmd->add_option("--channels", gr.options.channels);
  grad_cmd->add_option("--objects", gr.options.objects);
  grad_cmd->add_option("--classes", gr.options.classes);
  grad_cmd->add_option("--heads", gr.options.heads);
  grad_cmd->add_option("--samples", gr.options.samples);
  grad_cmd->add_option("--seed", gr.options.seed);
  grad_cmd->add_option("--tolerance", gr.options.tolerance);
  grad_cmd->add_option("--max-per-param", gr.options.max_per_param);
  bool grad_verbose = false;
  grad_cmd->add_flag("--verbose", grad_verbose, "Per-parameter worst probes");

  InspectArgs in;
  auto* inspect_cmd = app.add_subcommand("inspect", "Dump attention, node sequences and F_o for one sample");
  inspect_cmd->add_option("--checkpoint", in.checkpoint)->required();
  inspect_cmd->add_option("--data", in.data, "Manifest")->required();
  inspect_cmd->add_option("--index", in.index, "Sample index");
  inspect_cmd->add_option("--out", in.out, "Output directory")->required();

  AblateArgs ab;
  auto* ablate_cmd = app.add_subcommand("ablate", "Four-row component ablation");
  ablate_cmd->add_option("--config", ab.config, "Run config file");
  ablate_cmd->add_option("--train", ab.train, "Training manifest")->required();
  ablate_cmd->add_option("--test", ab.test, "Test manifest")->required();
  ablate_cmd->add_option("--out", ab.out, "Report file; the resolved config goes next to it");
  ablate_cmd->add_option("--metrics", ab.metrics, "Per-epoch metrics file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error\tusage\t" << one_line(e.what()) << "\n";
    return 2;
  }

  try {
    if (*gen_cmd) gen_data(gen);
    else if (*train_cmd) train(tr);
    else if (*eval_cmd) eval(ev);
    else if (*grad_cmd) return grad(gr, *grad_cmd, grad_verbose) ? 0 : 1;
    else if (*inspect_cmd) inspect(in);
    else if (*ablate_cmd) ablate(ab);
  } catch (const Error& e) {
    std::cerr << "error\t" << to_string(e.kind()) << "\t" << one_line(e.what()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error\tinternal\t" << one_line(e.what()) << "\n";
    return 1;
  }
  return 0;
}
