// Copyright 2026 The cxrseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <ostream>

#include "cxrseg/data_io.hpp"
#include "cxrseg/metrics.hpp"
#include "cxrseg/quantify.hpp"
#include "cxrseg/service.hpp"

namespace cxrseg {

using nlohmann::json;

namespace {

struct Common {
  std::uint64_t seed = 0;
  std::string precision = "f64";
  std::string config;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "Random seed");
  sub->add_option("--precision", c.precision, "Floating point precision")->check(CLI::IsMember({"f32", "f64"}));
  sub->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string file_timestamp(const std::filesystem::path& p) {
  const auto sys = std::chrono::file_clock::to_sys(std::filesystem::last_write_time(p));
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::time_point_cast<std::chrono::seconds>(sys));
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

GrayImage load_sized(const std::filesystem::path& path, std::size_t size) {
  GrayImage img = read_image(path);
  return size ? resize(img, size) : img;
}

std::vector<DatasetRecord> select_ids(const std::vector<DatasetRecord>& records, const std::vector<std::string>& ids) {
  std::map<std::string, const DatasetRecord*> by_id;
  for (const auto& r : records) by_id[r.id] = &r;
  std::vector<DatasetRecord> out;
  for (const auto& id : ids) out.push_back(*by_id.at(id));
  return out;
}

std::vector<DatasetRecord> split_records(const std::vector<DatasetRecord>& records, const std::string& split,
                                         std::size_t fold, std::uint64_t seed) {
  if (split == "all") return records;
  const FoldPlan plan = make_fold_plan(records, 0.2, 5, seed);
  if (split == "test") return select_ids(records, plan.test_ids());
  if (split == "val") return select_ids(records, plan.val_ids(fold));
  return select_ids(records, plan.train_ids(fold));
}

std::atomic<HttpServer*> g_server{nullptr};

extern "C" void on_signal(int) {
  if (HttpServer* s = g_server.load()) s->stop();
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Chest radiograph lung and infection segmentation toolkit", "cxrseg"};
  app.require_subcommand(1);
  Common common;

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic radiograph dataset");
  std::size_t synth_n = 10, synth_size = 64;
  std::string synth_out;
  synth->add_option("--n", synth_n, "Samples per class")->check(CLI::PositiveNumber);
  synth->add_option("--size", synth_size, "Image side in pixels")->check(CLI::Range(8, 4096));
  synth->add_option("--out", synth_out, "Output directory")->required();
  add_common(synth, common);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a segmentation model on a manifest");
  std::string tr_manifest, tr_task = "lung", tr_out, tr_history, tr_init, tr_arch;
  std::size_t tr_depth = 0, tr_base = 0, tr_size = 0, tr_epochs = 0, tr_fold = 0;
  train_cmd->add_option("--manifest", tr_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--task", tr_task, "Mask to learn")->check(CLI::IsMember({"lung", "infection"}));
  train_cmd->add_option("--out", tr_out, "Weights file to write")->required();
  train_cmd->add_option("--arch", tr_arch, "unet, unetpp or fpn")->check(CLI::IsMember({"unet", "unetpp", "fpn"}));
  train_cmd->add_option("--depth", tr_depth, "Encoder levels");
  train_cmd->add_option("--base", tr_base, "Channels of the first level");
  train_cmd->add_option("--size", tr_size, "Training image side");
  train_cmd->add_option("--epochs", tr_epochs, "Maximum epochs");
  train_cmd->add_option("--fold", tr_fold, "Validation fold");
  train_cmd->add_option("--history", tr_history, "Write per-epoch history as JSON Lines");
  train_cmd->add_option("--init", tr_init, "Start from these weights")->check(CLI::ExistingFile);
  add_common(train_cmd, common);

  // infer
  auto* infer = app.add_subcommand("infer", "Predict a mask for one image");
  std::string inf_weights, inf_image, inf_out, inf_probs;
  std::size_t inf_size = 0;
  infer->add_option("--weights", inf_weights, "Weights file")->required()->check(CLI::ExistingFile);
  infer->add_option("--image", inf_image, "Input image")->required()->check(CLI::ExistingFile);
  infer->add_option("--out", inf_out, "Thresholded mask to write");
  infer->add_option("--probs", inf_probs, "Foreground probability image to write");
  infer->add_option("--size", inf_size, "Resize the image to this side first");
  add_common(infer, common);

  // postprocess
  auto* post = app.add_subcommand("postprocess", "Post-process a probability image into a mask");
  std::string pp_probs, pp_kind = "lung", pp_lung, pp_out;
  post->add_option("--probs", pp_probs, "Foreground probability image (value / 255)")->required()->check(CLI::ExistingFile);
  post->add_option("--kind", pp_kind, "lung or infection")->check(CLI::IsMember({"lung", "infection"}));
  post->add_option("--lung", pp_lung, "Lung mask, required for infection")->check(CLI::ExistingFile);
  post->add_option("--out", pp_out, "Mask to write")->required();
  add_common(post, common);

  // quantify
  auto* quant = app.add_subcommand("quantify", "Detect and quantify infection in one image");
  std::string q_image, q_lung_w, q_inf_w, q_mode = "parallel", q_id, q_lung_out, q_inf_out;
  std::size_t q_size = 0;
  quant->add_option("--image", q_image, "Input image")->required()->check(CLI::ExistingFile);
  quant->add_option("--lung-weights", q_lung_w, "Lung model weights")->required()->check(CLI::ExistingFile);
  quant->add_option("--inf-weights", q_inf_w, "Infection model weights")->required()->check(CLI::ExistingFile);
  quant->add_option("--mode", q_mode, "parallel or cascaded")->check(CLI::IsMember({"parallel", "cascaded"}));
  quant->add_option("--id", q_id, "Case id (default: image file stem)");
  quant->add_option("--size", q_size, "Resize the image to this side first");
  quant->add_option("--lung-out", q_lung_out, "Write the final lung mask");
  quant->add_option("--inf-out", q_inf_out, "Write the final infection mask");
  add_common(quant, common);

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate models on a manifest");
  std::string ev_manifest, ev_task = "lung", ev_weights, ev_lung_w, ev_inf_w, ev_split = "test", ev_avg = "micro";
  std::string ev_json, ev_mode = "parallel", ev_model, ev_encoder;
  std::size_t ev_size = 0, ev_fold = 0;
  eval->add_option("--manifest", ev_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  eval->add_option("--task", ev_task, "lung, infection or detection")
      ->check(CLI::IsMember({"lung", "infection", "detection"}));
  eval->add_option("--weights", ev_weights, "Segmentation weights (lung and infection tasks)")->check(CLI::ExistingFile);
  eval->add_option("--lung-weights", ev_lung_w, "Lung weights (detection, or to clip infection)")
      ->check(CLI::ExistingFile);
  eval->add_option("--inf-weights", ev_inf_w, "Infection weights (detection)")->check(CLI::ExistingFile);
  eval->add_option("--split", ev_split, "Records to evaluate")->check(CLI::IsMember({"test", "val", "train", "all"}));
  eval->add_option("--fold", ev_fold, "Fold for val/train splits");
  eval->add_option("--averaging", ev_avg, "micro or macro")->check(CLI::IsMember({"micro", "macro"}));
  eval->add_option("--mode", ev_mode, "Pipeline mode for detection")->check(CLI::IsMember({"parallel", "cascaded"}));
  eval->add_option("--size", ev_size, "Resize images to this side");
  eval->add_option("--json", ev_json, "Write the report as JSON");
  eval->add_option("--model", ev_model, "Model label for the table");
  eval->add_option("--encoder", ev_encoder, "Encoder label for the table");
  add_common(eval, common);

  // ci
  auto* ci = app.add_subcommand("ci", "Confidence interval radius of a metric");
  double ci_metric = 0.0, ci_z = 1.96;
  std::size_t ci_n = 0;
  ci->add_option("--metric", ci_metric, "Metric value in [0,1]")->required()->check(CLI::Range(0.0, 1.0));
  ci->add_option("--n", ci_n, "Number of test samples")->required()->check(CLI::PositiveNumber);
  ci->add_option("--z", ci_z, "Normal quantile");
  add_common(ci, common);

  // summary
  auto* summary = app.add_subcommand("summary", "Parameter counts and inference time per architecture");
  std::vector<std::string> sm_archs = {"unet", "unetpp", "fpn"};
  std::size_t sm_depth = 0, sm_base = 0, sm_size = 0, sm_repeats = 10;
  summary->add_option("--arch", sm_archs, "Architectures")->delimiter(',')->check(CLI::IsMember({"unet", "unetpp", "fpn"}));
  summary->add_option("--depth", sm_depth, "Encoder levels");
  summary->add_option("--base", sm_base, "Channels of the first level");
  summary->add_option("--size", sm_size, "Input side for timing");
  summary->add_option("--repeats", sm_repeats, "Timed runs (at least 10)");
  add_common(summary, common);

  // serve
  auto* serve = app.add_subcommand("serve", "Serve the annotation workflow over HTTP");
  std::string sv_host, sv_log, sv_snapshot;
  int sv_port = -1;
  serve->add_option("--host", sv_host, "Bind address");
  serve->add_option("--port", sv_port, "Port (0 picks a free one)");
  serve->add_option("--log", sv_log, "Event log file")->required();
  serve->add_option("--snapshot", sv_snapshot, "Start from this state snapshot")->check(CLI::ExistingFile);
  add_common(serve, common);

  // workflow
  auto* wf = app.add_subcommand("workflow", "Inspect or seed an annotation workflow log");
  std::string wf_action, wf_log, wf_manifest, wf_out;
  wf->add_option("action", wf_action, "init, status or snapshot")->required()->check(CLI::IsMember({"init", "status", "snapshot"}));
  wf->add_option("--log", wf_log, "Event log file")->required();
  wf->add_option("--manifest", wf_manifest, "Manifest whose items seed the pool (init)")->check(CLI::ExistingFile);
  wf->add_option("--out", wf_out, "Snapshot file to write (snapshot)");
  add_common(wf, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    set_default_dtype(parse_dtype(common.precision));
    ServiceConfig cfg = common.config.empty() ? ServiceConfig{} : load_config(common.config);
    const bool seed_given = app.get_subcommands().front()->count("--seed") > 0;
    if (seed_given) {
      cfg.train.seed = common.seed;
      cfg.workflow.seed = common.seed;
    }
    const std::uint64_t seed = cfg.train.seed;

    if (synth->parsed()) {
      const auto records = synth_generate(synth_n, synth_size, seed, synth_out);
      out << "wrote " << records.size() << " samples to " << (std::filesystem::path(synth_out) / "manifest.jsonl").string()
          << "\n";
      return 0;
    }

    if (train_cmd->parsed()) {
      if (!tr_arch.empty()) cfg.model.arch = parse_arch(tr_arch);
      if (tr_depth) cfg.model.depth = tr_depth;
      if (tr_base) cfg.model.base_channels = tr_base;
      if (tr_epochs) cfg.train.max_epochs = tr_epochs;
      const std::size_t size = tr_size ? tr_size : cfg.image_size;
      cfg.model.validate();
      const auto records = load_manifest(tr_manifest);
      const FoldPlan plan = make_fold_plan(records, 0.2, 5, seed);
      const MaskTarget target = parse_target(tr_task);
      const SegDataset train_set = load_dataset(select_ids(records, plan.train_ids(tr_fold)), target, size);
      const SegDataset val_set = load_dataset(select_ids(records, plan.val_ids(tr_fold)), target, size);
      SegModel model = tr_init.empty() ? build_model(cfg.model, seed) : load_weights(tr_init, cfg.model);
      std::ofstream history;
      if (!tr_history.empty()) history.open(tr_history, std::ios::trunc);
      out << "training " << arch_name(cfg.model.arch) << " (" << model.param_count() << " parameters) on "
          << train_set.size() << " images, validating on " << val_set.size() << "\n";
      const TrainResult res = train(model, train_set, val_set, cfg.train, [&](const EpochRecord& r) {
        out << "epoch " << r.epoch << " train_loss " << fmt("%.6f", r.train_loss) << " val_loss "
            << fmt("%.6f", r.val_loss) << " val_dsc " << fmt("%.4f", r.val_dsc) << " lr " << fmt("%.3g", r.lr)
            << (r.improved ? " *" : "") << (r.lr_reduced ? " lr-reduced" : "") << std::endl;
        if (history) {
          history << json{{"epoch", r.epoch},       {"train_loss", r.train_loss}, {"val_loss", r.val_loss},
                          {"val_dsc", r.val_dsc},   {"lr", r.lr},                 {"improved", r.improved},
                          {"lr_reduced", r.lr_reduced}}
                         .dump()
                  << "\n";
        }
      });
      save_weights(tr_out, model);
      out << "best epoch " << res.best_epoch << " of " << res.stopped_epoch << ", weights written to " << tr_out << "\n";
      return 0;
    }

    if (infer->parsed()) {
      const SegModel model = load_weights(inf_weights);
      const GrayImage img = load_sized(inf_image, inf_size);
      const ProbMap pm = predict(model, img);
      if (!inf_probs.empty()) {
        GrayImage p(pm.height(), pm.width());
        for (std::size_t i = 0; i < p.pixels.size(); ++i) {
          p.pixels[i] = static_cast<std::uint8_t>(std::lround(pm.foreground(i) * 255.0));
        }
        write_image(inf_probs, p);
      }
      const BinaryMask mask = threshold(pm, cfg.post.threshold);
      if (!inf_out.empty()) write_mask(inf_out, mask);
      out << "foreground pixels " << mask.count() << " of " << mask.size() << "\n";
      return 0;
    }

    if (post->parsed()) {
      const GrayImage p = read_image(pp_probs);
      std::vector<double> fg(p.pixels.size());
      for (std::size_t i = 0; i < fg.size(); ++i) fg[i] = p.pixels[i] / 255.0;
      const ProbMap pm(p.height, p.width, std::move(fg));
      BinaryMask mask;
      if (pp_kind == "lung") {
        mask = postprocess_lung(pm, cfg.post);
      } else {
        if (pp_lung.empty()) throw UsageError("--lung is required for infection masks");
        mask = postprocess_infection(pm, read_mask(pp_lung), cfg.post);
      }
      write_mask(pp_out, mask);
      out << "foreground pixels " << mask.count() << " of " << mask.size() << "\n";
      return 0;
    }

    if (quant->parsed()) {
      const SegModel lung = load_weights(q_lung_w);
      const SegModel inf = load_weights(q_inf_w);
      PipelineOptions opts;
      opts.mode = parse_mode(q_mode);
      opts.post = cfg.post;
      opts.case_id = q_id.empty() ? std::filesystem::path(q_image).stem().string() : q_id;
      opts.timestamp = file_timestamp(q_image);
      const PipelineResult res = run_pipeline(load_sized(q_image, q_size), lung, inf, opts);
      if (!q_lung_out.empty()) write_mask(q_lung_out, res.lung);
      if (!q_inf_out.empty()) write_mask(q_inf_out, res.infection);
      out << to_json(res.report).dump(2) << "\n";
      return 0;
    }

    if (eval->parsed()) {
      const auto records = split_records(load_manifest(ev_manifest), ev_split, ev_fold, seed);
      if (records.empty()) throw UsageError("no records in split '" + ev_split + "'");
      MetricsReport report;
      if (ev_task == "detection") {
        if (ev_lung_w.empty() || ev_inf_w.empty()) throw UsageError("detection needs --lung-weights and --inf-weights");
        const SegModel lung = load_weights(ev_lung_w);
        const SegModel inf = load_weights(ev_inf_w);
        PipelineOptions opts;
        opts.mode = parse_mode(ev_mode);
        opts.post = cfg.post;
        std::map<std::string, std::uint8_t> pred, gt;
        for (const auto& r : records) {
          const Sample s = load_sample(r, ev_size);
          pred[r.id] = run_pipeline(s.image, lung, inf, opts).report.detection == Detection::positive ? 1 : 0;
          gt[r.id] = r.sample_class == SampleClass::covid ? 1 : 0;
        }
        report = evaluate_run(pred, gt);
      } else {
        if (ev_weights.empty()) throw UsageError("--weights is required for segmentation tasks");
        const SegModel model = load_weights(ev_weights);
        std::optional<SegModel> lung;
        if (ev_task == "infection" && !ev_lung_w.empty()) lung = load_weights(ev_lung_w);
        std::map<std::string, BinaryMask> pred, gt;
        for (const auto& r : records) {
          const Sample s = load_sample(r, ev_size);
          const ProbMap pm = predict(model, s.image);
          if (ev_task == "lung") {
            pred[r.id] = postprocess_lung(pm, cfg.post);
            gt[r.id] = s.lung;
          } else {
            pred[r.id] = lung ? postprocess_infection(pm, postprocess_lung(predict(*lung, s.image), cfg.post), cfg.post)
                              : threshold(pm, cfg.post.threshold);
            gt[r.id] = s.infection;
          }
        }
        report = evaluate_run(pred, gt, ev_task == "lung" ? Task::lung_segmentation : Task::infection_segmentation,
                              ev_avg == "macro" ? Averaging::macro : Averaging::micro);
      }
      report.model = ev_model;
      report.encoder = ev_encoder;
      out << format_table({report});
      if (!ev_json.empty()) {
        std::ofstream f(ev_json, std::ios::trunc);
        f << to_json(report).dump(2) << "\n";
      }
      return 0;
    }

    if (ci->parsed()) {
      out << fmt("%.4f", confidence_radius(ci_metric, CIParams{ci_n, ci_z})) << "\n";
      return 0;
    }

    if (summary->parsed()) {
      ModelConfig mc = cfg.model;
      if (sm_depth) mc.depth = sm_depth;
      if (sm_base) mc.base_channels = sm_base;
      const std::size_t size = sm_size ? sm_size : cfg.image_size;
      const Tensor input = Tensor::filled({1, mc.in_channels, size, size}, 0.5, default_dtype());
      out << "arch      params  ms/image\n";
      for (const auto& a : sm_archs) {
        mc.arch = parse_arch(a);
        const SegModel m = build_model(mc, seed);
        const ModelSummary s = model_summary(m, input, sm_repeats);
        char line[96];
        std::snprintf(line, sizeof line, "%-8s %7zu  %8.2f\n", a.c_str(), s.param_count, s.inference_ms);
        out << line;
      }
      return 0;
    }

    if (serve->parsed()) {
      std::optional<WorkflowState> snapshot;
      if (!sv_snapshot.empty()) {
        std::ifstream in(sv_snapshot);
        snapshot = state_from_json(json::parse(in));
      }
      Workflow workflow(cfg.workflow, sv_log, utc_now, std::move(snapshot));
      JobQueue jobs;
      Api api(workflow, jobs, manifest_train_factory(cfg));
      HttpServer server(api);
      const int port = server.bind(sv_host.empty() ? cfg.host : sv_host, sv_port >= 0 ? sv_port : cfg.port);
      out << "listening on " << (sv_host.empty() ? cfg.host : sv_host) << ":" << port << std::endl;
      g_server.store(&server);
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      server.listen();
      g_server.store(nullptr);
      return 0;
    }

    if (wf->parsed()) {
      Workflow workflow(cfg.workflow, wf_log);
      if (wf_action == "init") {
        if (wf_manifest.empty()) throw UsageError("init needs --manifest");
        std::vector<NewItem> items;
        for (const auto& r : load_manifest(wf_manifest)) {
          items.push_back({r.id, r.image.string(), class_name(r.sample_class)});
        }
        workflow.add_items(items);
      } else if (wf_action == "snapshot") {
        if (wf_out.empty()) throw UsageError("snapshot needs --out");
        workflow.save_snapshot(wf_out);
      }
      out << to_json(workflow.progress()).dump(2) << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace cxrseg
