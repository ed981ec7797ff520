// phasekit command-line interface: synthetic data, temporal extraction,
// training, batch and streaming inference, evaluation, benchmarking, and
// gradient verification.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "phasekit/config.hpp"
#include "phasekit/io.hpp"
#include "phasekit/metrics.hpp"
#include "phasekit/streaming.hpp"
#include "phasekit/synthetic.hpp"
#include "phasekit/training.hpp"

namespace fs = std::filesystem;
using namespace phasekit;

namespace {

struct CommonModelArgs {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value

  RunConfig resolve() const {
    RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
    apply(cfg);
    return cfg;
  }

  RunConfig resolve_from(const std::string& text) const {
    RunConfig cfg = RunConfig::from_text(text);
    if (!config_path.empty()) cfg = RunConfig::load(config_path);
    apply(cfg);
    return cfg;
  }

 private:
  void apply(RunConfig& cfg) const {
    for (const std::string& kv : overrides) {
      const std::size_t eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got " + kv);
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
  }
};

void add_model_args(CLI::App* cmd, CommonModelArgs& args) {
  cmd->add_option("--config", args.config_path, "key=value config file");
  cmd->add_option("--set", args.overrides, "override a config key (key=value, repeatable)");
}

int check_phase_count(const Manifest& manifest, int n_phases) {
  for (const ManifestEntry& e : manifest.entries)
    if (e.n_phases != n_phases)
      throw DataError("video " + e.id + ": manifest says " + std::to_string(e.n_phases) +
                      " phases, config says " + std::to_string(n_phases));
  return n_phases;
}

QueryKeyMode parse_mode(const std::string& text) {
  const std::size_t comma = text.find(',');
  if (comma == std::string::npos)
    throw ConfigError("--mode expects query,key (e.g. spatial,temporal)");
  return {source_from_string(text.substr(0, comma)),
          source_from_string(text.substr(comma + 1))};
}

double pct(double v) { return 100.0 * v; }

void print_eval_report(const MetricReport& report, long long total_frames) {
  std::printf("# phasekit-eval v1\n");
  std::printf("videos %zu\n", report.per_video_accuracy.size());
  std::printf("frames %lld\n", total_frames);
  std::printf("AC %.2f std %.2f\n", pct(report.accuracy.mean), pct(report.accuracy.stddev));
  std::printf("PR %.2f std %.2f\n", pct(report.precision_phases.mean),
              pct(report.precision_phases.stddev));
  std::printf("RE %.2f std %.2f\n", pct(report.recall_phases.mean),
              pct(report.recall_phases.stddev));
  std::printf("JA %.2f std %.2f\n", pct(report.jaccard_phases.mean),
              pct(report.jaccard_phases.stddev));
  std::printf("PR_videos %.2f std %.2f\n", pct(report.precision_videos.mean),
              pct(report.precision_videos.stddev));
  std::printf("RE_videos %.2f std %.2f\n", pct(report.recall_videos.mean),
              pct(report.recall_videos.stddev));
  std::printf("JA_videos %.2f std %.2f\n", pct(report.jaccard_videos.mean),
              pct(report.jaccard_videos.stddev));
  int excluded = 0;
  for (std::size_t c = 0; c < report.jaccard.size(); ++c) {
    const auto cell = [](const PhaseValue& v) {
      return v.defined ? std::to_string(pct(v.value)).substr(0, 5) : std::string("undef");
    };
    std::printf("phase %zu PR %s RE %s JA %s\n", c, cell(report.precision[c]).c_str(),
                cell(report.recall[c]).c_str(), cell(report.jaccard[c]).c_str());
    if (!report.jaccard[c].defined) ++excluded;
  }
  std::printf("excluded_phases %d\n", excluded);
}

// --- subcommand bodies ------------------------------------------------------

int run_synth(const SynthSpec& spec, const std::string& out_dir, const std::string& alias) {
  SynthSpec s = spec;
  if (!alias.empty()) {
    const std::size_t comma = alias.find(',');
    if (comma == std::string::npos) throw ConfigError("--alias expects A,B");
    s.alias_a = std::stoi(alias.substr(0, comma));
    s.alias_b = std::stoi(alias.substr(comma + 1));
  }
  const SynthResult result = generate_synthetic(s, out_dir);
  std::printf("wrote %zu videos to %s\n", result.ids.size(), out_dir.c_str());
  std::printf("manifest %s\n", result.all_manifest.c_str());
  if (!result.train_manifest.empty()) std::printf("train %s\n", result.train_manifest.c_str());
  if (!result.test_manifest.empty()) std::printf("test %s\n", result.test_manifest.c_str());
  return 0;
}

int run_extract(const std::string& manifest_path, const std::string& checkpoint_path,
                const std::string& out_dir) {
  const LoadedModel model = load_model(checkpoint_path);
  if (!model.has_tcn) throw DataError(checkpoint_path + ": no TCN parameters");
  const Manifest manifest = read_manifest(manifest_path);
  check_phase_count(manifest, model.config.n_phases);
  validate_manifest(manifest);
  fs::create_directories(out_dir);
  const TcnConfig tc = model.config.tcn_config();

  std::vector<ManifestEntry> updated;
  for (const ManifestEntry& e : manifest.entries) {
    const VideoData video = load_video(manifest, e);
    const Matrix g = extract_temporal(video.spatial, model.tcn, tc);
    const std::string temporal_name = e.id + ".temporal.emb";
    write_embeddings((fs::path(out_dir) / temporal_name).string(), g);
    ManifestEntry u = e;
    u.spatial_path = fs::absolute(resolve_path(manifest, e.spatial_path)).string();
    u.labels_path = fs::absolute(resolve_path(manifest, e.labels_path)).string();
    u.temporal_path = temporal_name;
    updated.push_back(std::move(u));
    std::printf("extracted %s (%zu frames)\n", e.id.c_str(), video.frames());
  }
  const std::string out_manifest =
      (fs::path(out_dir) / fs::path(manifest_path).filename()).string();
  write_manifest(out_manifest, updated);
  std::printf("manifest %s\n", out_manifest.c_str());
  return 0;
}

int run_train_tcn(const CommonModelArgs& args, const std::string& manifest_path,
                  const std::string& out_path, const std::string& curve_path) {
  const RunConfig cfg = args.resolve();
  const Manifest manifest = read_manifest(manifest_path);
  check_phase_count(manifest, cfg.n_phases);
  validate_manifest(manifest);
  const std::vector<VideoData> dataset = load_dataset(manifest);

  Rng rng(RngSeed{cfg.seed});
  TcnParams params = cfg.init_tcn(rng);
  const TrainResult result = train_tcn(dataset, params, cfg.tcn_config(), cfg.train_config());

  Checkpoint ckpt;
  ckpt.config_text = cfg.to_text();
  append_tcn_blocks(ckpt, params);
  save_checkpoint(out_path, ckpt);
  if (!curve_path.empty()) write_loss_curve(curve_path, result.loss_curve);
  std::printf("trained tcn on %zu videos for %d epochs, loss %.4f -> %.4f\n", dataset.size(),
              cfg.epochs, result.loss_curve.front(), result.loss_curve.back());
  std::printf("checkpoint %s\n", out_path.c_str());
  return 0;
}

int run_train_agg(const CommonModelArgs& args, const std::string& manifest_path,
                  const std::string& out_path, const std::string& curve_path,
                  const std::string& mode_text, const std::string& tcn_checkpoint) {
  RunConfig cfg = args.resolve();
  if (!mode_text.empty()) {
    const QueryKeyMode mode = parse_mode(mode_text);
    cfg.query_source = to_string(mode.query);
    cfg.key_source = to_string(mode.key);
  }
  const Manifest manifest = read_manifest(manifest_path);
  check_phase_count(manifest, cfg.n_phases);
  const bool needs_temporal =
      cfg.mode().query == EmbeddingSource::temporal ||
      (cfg.mode().key == EmbeddingSource::temporal && cfg.window > 0);
  validate_manifest(manifest, needs_temporal);
  const std::vector<VideoData> dataset = load_dataset(manifest, needs_temporal);

  Rng rng(RngSeed{cfg.seed});
  AggregationParams params = cfg.init_aggregation(rng);
  const TrainResult result =
      train_aggregation(dataset, params, cfg.mode(), cfg.train_config());

  Checkpoint ckpt;
  ckpt.config_text = cfg.to_text();
  if (!tcn_checkpoint.empty()) {
    const LoadedModel tcn_model = load_model(tcn_checkpoint);
    if (!tcn_model.has_tcn) throw DataError(tcn_checkpoint + ": no TCN parameters");
    append_tcn_blocks(ckpt, tcn_model.tcn);
  }
  append_aggregation_blocks(ckpt, params);
  save_checkpoint(out_path, ckpt);
  if (!curve_path.empty()) write_loss_curve(curve_path, result.loss_curve);
  std::printf("trained aggregation (%s query, %s key) on %zu videos for %d epochs, "
              "loss %.4f -> %.4f\n",
              cfg.query_source.c_str(), cfg.key_source.c_str(), dataset.size(), cfg.epochs,
              result.loss_curve.front(), result.loss_curve.back());
  std::printf("checkpoint %s\n", out_path.c_str());
  return 0;
}

int run_infer(const std::string& manifest_path, const std::string& checkpoint_path,
              const std::string& out_dir, const std::string& mode_text) {
  const LoadedModel model = load_model(checkpoint_path);
  if (!model.has_agg) throw DataError(checkpoint_path + ": no aggregation parameters");
  const QueryKeyMode mode =
      mode_text.empty() ? model.config.mode() : parse_mode(mode_text);
  const Manifest manifest = read_manifest(manifest_path);
  check_phase_count(manifest, model.config.n_phases);
  const bool needs_temporal =
      mode.query == EmbeddingSource::temporal ||
      (mode.key == EmbeddingSource::temporal && model.agg.window_length > 0);
  validate_manifest(manifest, needs_temporal);
  fs::create_directories(out_dir);
  for (const ManifestEntry& e : manifest.entries) {
    const VideoData video = load_video(manifest, e, needs_temporal);
    const PredictionTrace trace = predict_video(video.spatial, video.temporal, model.agg, mode);
    write_trace((fs::path(out_dir) / (e.id + ".trace")).string(), trace);
    std::printf("inferred %s (%zu frames, accuracy %.4f)\n", e.id.c_str(), video.frames(),
                video_accuracy(trace.labels, video.labels));
  }
  return 0;
}

std::vector<PhaseSequence> load_trace_labels(const std::string& preds_dir,
                                             const Manifest& manifest,
                                             const std::vector<PhaseSequence>& truths) {
  std::vector<PhaseSequence> preds;
  for (std::size_t v = 0; v < manifest.entries.size(); ++v) {
    const ManifestEntry& e = manifest.entries[v];
    const fs::path trace_path = fs::path(preds_dir) / (e.id + ".trace");
    if (!fs::exists(trace_path))
      throw DataError("video " + e.id + ": no trace at " + trace_path.string());
    const PredictionTrace trace = read_trace(trace_path.string());
    if (trace.labels.size() != truths[v].size())
      throw DataError("video " + e.id + ": trace has " + std::to_string(trace.labels.size()) +
                      " frames, labels have " + std::to_string(truths[v].size()));
    preds.push_back(trace.labels);
  }
  return preds;
}

int run_eval(const std::string& preds_dir, const std::string& manifest_path,
             const std::string& ribbon_dir, const std::string& compare_dir) {
  const Manifest manifest = read_manifest(manifest_path);
  const int n_phases = manifest.entries.front().n_phases;
  check_phase_count(manifest, n_phases);

  std::vector<PhaseSequence> truths;
  long long total_frames = 0;
  for (const ManifestEntry& e : manifest.entries) {
    truths.push_back(read_labels(resolve_path(manifest, e.labels_path)));
    total_frames += static_cast<long long>(truths.back().size());
  }
  const std::vector<PhaseSequence> preds = load_trace_labels(preds_dir, manifest, truths);
  if (!ribbon_dir.empty()) {
    fs::create_directories(ribbon_dir);
    for (std::size_t v = 0; v < preds.size(); ++v)
      export_ribbon(preds[v], truths[v],
                    (fs::path(ribbon_dir) / manifest.entries[v].id).string());
  }
  const MetricReport report = phase_metrics(preds, truths, n_phases);
  print_eval_report(report, total_frames);

  if (!compare_dir.empty()) {
    const std::vector<PhaseSequence> other = load_trace_labels(compare_dir, manifest, truths);
    const MetricReport other_report = phase_metrics(other, truths, n_phases);
    std::printf("compare_JA %.2f std %.2f\n", pct(other_report.jaccard_phases.mean),
                pct(other_report.jaccard_phases.stddev));
    if (report.per_video_jaccard.size() >= 5 &&
        report.per_video_jaccard.size() == other_report.per_video_jaccard.size()) {
      try {
        const double p =
            wilcoxon_signed_rank(report.per_video_jaccard, other_report.per_video_jaccard);
        std::printf("wilcoxon_ja_p %.3e\n", p);
      } catch (const DegenerateSampleError&) {
        std::printf("wilcoxon_ja_p degenerate (identical per-video JA)\n");
      }
    } else {
      std::printf("wilcoxon_ja_p skipped (needs >= 5 videos with defined JA)\n");
    }
  }
  return 0;
}

int run_stream(const std::string& checkpoint_path, const std::string& input_path,
               const std::string& out_path) {
  const LoadedModel model = load_model(checkpoint_path);
  if (!model.has_tcn || !model.has_agg)
    throw DataError(checkpoint_path + ": streaming needs both TCN and aggregation parameters");
  const Matrix frames = read_embeddings(input_path);
  StreamSession session(model.tcn, model.config.tcn_config(), model.agg,
                        model.config.mode());
  PredictionTrace trace;
  trace.probs = Matrix(frames.rows(), static_cast<std::size_t>(model.config.n_phases));
  double total_ns = 0.0;
  for (std::size_t t = 0; t < frames.rows(); ++t) {
    const auto [probs, ns] = session.push_frame(row(frames, t));
    for (std::size_t j = 0; j < probs.cols(); ++j) trace.probs(t, j) = probs(0, j);
    trace.labels.push_back(static_cast<int>(argmax_row(probs, 0)));
    trace.latency_ns.push_back(ns);
    total_ns += ns;
  }
  session.close();
  if (!out_path.empty()) write_trace(out_path, trace);
  std::printf("streamed %zu frames, mean latency %.3f ms, %.1f fps\n", frames.rows(),
              total_ns / static_cast<double>(frames.rows()) / 1e6,
              static_cast<double>(frames.rows()) / (total_ns / 1e9));
  return 0;
}

int run_bench(const CommonModelArgs& args, const std::string& checkpoint_path,
              std::size_t frames, std::size_t warmup) {
  RunConfig cfg;
  TcnParams tcn;
  AggregationParams agg;
  if (!checkpoint_path.empty()) {
    const LoadedModel model = load_model(checkpoint_path);
    if (!model.has_tcn || !model.has_agg)
      throw DataError(checkpoint_path + ": benchmark needs both TCN and aggregation parameters");
    cfg = model.config;
    tcn = model.tcn;
    agg = model.agg;
  } else {
    cfg = args.resolve();
    Rng rng(RngSeed{cfg.seed});
    tcn = cfg.init_tcn(rng);
    agg = cfg.init_aggregation(rng);
  }
  const LatencyStats stats = benchmark_stream(tcn, cfg.tcn_config(), agg, frames, warmup,
                                              RngSeed{cfg.seed}, cfg.mode());
  std::printf("# phasekit-bench v1\n");
  std::printf("path temporal+aggregation (spatial extraction excluded)\n");
  std::printf("hardware %u logical cpus, single-threaded session\n",
              std::thread::hardware_concurrency());
  std::printf("config n_phases=%d window=%d heads=%d d_k=%d d_ff=%d tcn=%dx%d\n",
              cfg.n_phases, cfg.window, cfg.heads, cfg.d_k, cfg.d_ff, cfg.tcn_stages,
              cfg.tcn_layers);
  std::printf("frames %zu\n", stats.frames);
  std::printf("warmup %zu\n", stats.warmup);
  std::printf("fps %.1f\n", stats.fps);
  std::printf("p50_ms %.4f\n", stats.p50_ns / 1e6);
  std::printf("p95_ms %.4f\n", stats.p95_ns / 1e6);
  std::printf("p99_ms %.4f\n", stats.p99_ns / 1e6);
  std::printf("max_ms %.4f\n", stats.max_ns / 1e6);
  return 0;
}

int run_gradcheck(std::uint64_t seed, bool agg_only) {
  GradcheckConfig cfg;
  cfg.seed = RngSeed{seed};
  cfg.include_tcn = !agg_only;
  const GradientReport report = verify_gradients(cfg);
  std::printf("# phasekit-gradcheck v1\n");
  std::printf("step %.0e tolerance %.0e\n", report.step, report.tolerance);
  for (const BlockReport& block : report.blocks)
    std::printf("block %-24s max_rel_err %.3e\n", block.name.c_str(), block.max_rel_err);
  std::printf("max_rel_err %.3e (%s)\n", report.max_rel_err, report.worst_block.c_str());
  std::printf("%s\n", report.pass ? "PASS" : "FAIL");
  return report.pass ? 0 : 1;
}

int run_params(const std::string& checkpoint_path) {
  const LoadedModel model = load_model(checkpoint_path);
  std::printf("# phasekit-params v1\n");
  if (model.has_agg) {
    std::printf("aggregation_params %lld\n", report_param_count(model.agg));
    std::printf("aggregation_breakdown w_l %lld layer1 %lld layer2 %lld\n",
                static_cast<long long>(model.agg.w_l.size()),
                transformer_param_count(model.agg.layer1),
                transformer_param_count(model.agg.layer2));
  }
  if (model.has_tcn) std::printf("tcn_params %lld\n", tcn_param_count(model.tcn));
  if (!model.has_agg && !model.has_tcn) throw DataError("checkpoint holds no parameters");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"phasekit: online workflow phase recognition from frame embeddings"};
  app.require_subcommand(1);

  // synth
  SynthSpec synth_spec;
  std::string synth_out, synth_alias;
  auto* synth = app.add_subcommand("synth", "generate a synthetic embedding dataset");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--phases", synth_spec.n_phases, "phase count");
  synth->add_option("--videos", synth_spec.videos, "video count");
  synth->add_option("--frames", synth_spec.frames, "frames per video");
  synth->add_option("--sigma", synth_spec.sigma, "cluster noise");
  synth->add_option("--seed", synth_spec.seed, "rng seed");
  synth->add_option("--train", synth_spec.train_videos, "videos in the train split");
  synth->add_option("--ambiguity", synth_spec.ambiguity_width,
                    "transition-zone half-width (frames)");
  synth->add_option("--alias", synth_alias, "two phases sharing one cluster (A,B)");
  synth->add_option("--spatial-dim", synth_spec.spatial_dim, "spatial embedding width");

  // extract-temporal
  std::string et_manifest, et_checkpoint, et_out;
  auto* extract = app.add_subcommand("extract-temporal",
                                     "run the TCN over a dataset and store temporal embeddings");
  extract->add_option("--manifest", et_manifest)->required();
  extract->add_option("--checkpoint", et_checkpoint)->required();
  extract->add_option("--out", et_out, "output directory")->required();

  // train-tcn
  CommonModelArgs tcn_args;
  std::string tt_manifest, tt_out, tt_curve;
  auto* ttcn = app.add_subcommand("train-tcn", "train the temporal TCN on a dataset");
  ttcn->add_option("--manifest", tt_manifest)->required();
  ttcn->add_option("--out", tt_out, "checkpoint path")->required();
  ttcn->add_option("--curve", tt_curve, "loss curve output");
  add_model_args(ttcn, tcn_args);

  // train-agg
  CommonModelArgs agg_args;
  std::string ta_manifest, ta_out, ta_curve, ta_mode, ta_tcn;
  auto* tagg = app.add_subcommand("train-agg", "train the aggregation head on a dataset");
  tagg->add_option("--manifest", ta_manifest)->required();
  tagg->add_option("--out", ta_out, "checkpoint path")->required();
  tagg->add_option("--curve", ta_curve, "loss curve output");
  tagg->add_option("--mode", ta_mode, "query,key sources (ablation)");
  tagg->add_option("--tcn-checkpoint", ta_tcn, "bundle TCN blocks from this checkpoint");
  add_model_args(tagg, agg_args);

  // infer
  std::string in_manifest, in_checkpoint, in_out, in_mode;
  auto* infer = app.add_subcommand("infer", "batch inference, one trace file per video");
  infer->add_option("--manifest", in_manifest)->required();
  infer->add_option("--checkpoint", in_checkpoint)->required();
  infer->add_option("--out", in_out, "trace output directory")->required();
  infer->add_option("--mode", in_mode, "query,key sources (ablation)");

  // eval
  std::string ev_preds, ev_manifest, ev_ribbons;
  auto* eval_cmd = app.add_subcommand("eval", "score traces against manifest labels");
  eval_cmd->add_option("--preds", ev_preds, "trace directory")->required();
  eval_cmd->add_option("--manifest", ev_manifest)->required();
  eval_cmd->add_option("--ribbon-dir", ev_ribbons, "write per-video ribbon files here");
  std::string ev_compare;
  eval_cmd->add_option("--compare", ev_compare,
                       "second trace directory; adds a paired Wilcoxon test on per-video JA");

  // stream
  std::string st_checkpoint, st_input, st_out;
  auto* stream = app.add_subcommand("stream", "frame-by-frame inference over one video");
  stream->add_option("--checkpoint", st_checkpoint)->required();
  stream->add_option("--input", st_input, "spatial embedding file")->required();
  stream->add_option("--out", st_out, "trace output path");

  // bench
  CommonModelArgs bench_args;
  std::string be_checkpoint;
  std::size_t be_frames = 2000, be_warmup = 100;
  auto* bench = app.add_subcommand("bench", "streaming throughput benchmark");
  bench->add_option("--frames", be_frames, "measured frames");
  bench->add_option("--warmup", be_warmup, "warm-up frames excluded from stats");
  bench->add_option("--checkpoint", be_checkpoint, "model checkpoint (else random init)");
  add_model_args(bench, bench_args);

  // gradcheck
  std::uint64_t gc_seed = 1;
  bool gc_agg_only = false;
  auto* gradcheck = app.add_subcommand("gradcheck", "verify analytic gradients");
  gradcheck->add_option("--seed", gc_seed, "rng seed");
  gradcheck->add_flag("--agg-only", gc_agg_only, "skip the TCN sweep");

  // params
  std::string pa_checkpoint;
  auto* params = app.add_subcommand("params", "report learnable parameter counts");
  params->add_option("--checkpoint", pa_checkpoint)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return run_synth(synth_spec, synth_out, synth_alias);
    if (extract->parsed()) return run_extract(et_manifest, et_checkpoint, et_out);
    if (ttcn->parsed()) return run_train_tcn(tcn_args, tt_manifest, tt_out, tt_curve);
    if (tagg->parsed())
      return run_train_agg(agg_args, ta_manifest, ta_out, ta_curve, ta_mode, ta_tcn);
    if (infer->parsed()) return run_infer(in_manifest, in_checkpoint, in_out, in_mode);
    if (eval_cmd->parsed()) return run_eval(ev_preds, ev_manifest, ev_ribbons, ev_compare);
    if (stream->parsed()) return run_stream(st_checkpoint, st_input, st_out);
    if (bench->parsed()) return run_bench(bench_args, be_checkpoint, be_frames, be_warmup);
    if (gradcheck->parsed()) return run_gradcheck(gc_seed, gc_agg_only);
    if (params->parsed()) return run_params(pa_checkpoint);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 3;
  }
  return 0;
}
