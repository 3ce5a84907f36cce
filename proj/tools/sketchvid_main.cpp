// sketchvid: procedural sketch/video data generation, two-stream metric
// training, and sequence-level retrieval evaluation from one binary.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "sketchvid/config.hpp"
#include "sketchvid/dataset.hpp"
#include "sketchvid/errors.hpp"
#include "sketchvid/flow.hpp"
#include "sketchvid/io.hpp"
#include "sketchvid/model.hpp"
#include "sketchvid/retrieval.hpp"
#include "sketchvid/training.hpp"

using namespace svr;
using nlohmann::json;

namespace {

struct CommonArgs {
  std::string dataset_dir;
  std::string run_dir;
  std::string config_path;
  std::string supervision = "strong";
  std::string split;
};

fs::path resolve_run_dir(const std::string& cli_value) {
  if (const char* env = std::getenv("SKETCHVID_RUN_DIR"); env && *env) return fs::path(env);
  if (cli_value.empty()) throw config_error("no run directory given (--run or SKETCHVID_RUN_DIR)");
  return fs::path(cli_value);
}

RunConfig resolve_config(const std::string& explicit_path, const fs::path& run_dir) {
  if (!explicit_path.empty()) return RunConfig::from_file(explicit_path);
  const fs::path run_cfg = run_dir / "config.ini";
  if (!run_dir.empty() && fs::exists(run_cfg)) return RunConfig::from_file(run_cfg);
  return RunConfig::defaults();
}

fs::path checkpoint_path(const fs::path& run_dir, StreamKind kind, const std::string& supervision) {
  return run_dir / "checkpoints" / (std::string(stream_name(kind)) + "_" + supervision + ".ckpt");
}

void check_dataset_config(const Dataset& ds, const RunConfig& cfg) {
  if (gen_config_hash(cfg.gen) != ds.manifest().config_hash) {
    throw data_error("dataset " + ds.root().string() +
                     " was generated with a different generator config (digest " +
                     hex64(ds.manifest().config_hash) + " vs " + hex64(gen_config_hash(cfg.gen)) +
                     ")");
  }
}

struct LoadedModels {
  AppearanceModel appearance;
  MotionModel motion;
};

LoadedModels load_models(const fs::path& run_dir, const RunConfig& cfg,
                         const std::string& supervision, int frame_size) {
  LoadedModels m{AppearanceModel::create(cfg.model, frame_size, cfg.seed),
                 MotionModel::create(cfg.model, frame_size, cfg.flow.stack_length, cfg.seed)};
  load_stream_checkpoint(checkpoint_path(run_dir, StreamKind::Appearance, supervision),
                         m.appearance, nullptr, cfg.hash());
  load_stream_checkpoint(checkpoint_path(run_dir, StreamKind::Motion, supervision), m.motion,
                         nullptr, cfg.hash());
  return m;
}

int cmd_generate(const std::string& out_dir, const std::string& config_path,
                 std::optional<uint64_t> seed_override) {
  RunConfig cfg = config_path.empty() ? RunConfig::defaults() : RunConfig::from_file(config_path);
  if (seed_override) cfg.seed = *seed_override;

  const fs::path out(out_dir);
  DatasetManifest manifest = generate_dataset(cfg.gen, cfg.seed, out);
  cfg.save(out / "config.ini");

  size_t train = 0, val = 0, test = 0, pages = 0;
  for (const auto& e : manifest.entries) {
    pages += size_t(e.pages);
    if (e.split == "train") ++train;
    else if (e.split == "val") ++val;
    else ++test;
  }
  const uint64_t digest = fnv1a64(read_file_text(out / "manifest.json"));
  std::printf("generated %zu clips (%zu sketch pages) into %s\n", manifest.entries.size(), pages,
              out.string().c_str());
  std::printf("splits: train=%zu val=%zu test=%zu\n", train, val, test);
  std::printf("manifest digest: %s\n", hex64(digest).c_str());
  return 0;
}

int cmd_train(const CommonArgs& args, bool resume, const std::string& stream_sel) {
  const fs::path run_dir = resolve_run_dir(args.run_dir);
  RunConfig cfg = resolve_config(args.config_path, run_dir);
  fs::create_directories(run_dir / "checkpoints");
  fs::create_directories(run_dir / "logs");
  cfg.save(run_dir / "config.ini");

  const Dataset ds = Dataset::load(args.dataset_dir);
  check_dataset_config(ds, cfg);
  FlowCache flows(run_dir / "flowcache", cfg.flow);
  const std::string split = args.split.empty() ? "train" : args.split;
  auto entries = ds.split_entries(split);
  if (entries.empty()) throw data_error("split '" + split + "' selects no clips");

  auto train_one = [&](StreamKind kind) {
    std::printf("training %s stream (%s supervision, %zu clips)...\n", stream_name(kind),
                args.supervision.c_str(), entries.size());
    AppearanceModel app = AppearanceModel::create(cfg.model, ds.frame_size(), cfg.seed);
    MotionModel mo = MotionModel::create(cfg.model, ds.frame_size(), cfg.flow.stack_length,
                                         cfg.seed);
    StreamNet& anchor = kind == StreamKind::Appearance ? app.cnn : mo.sketch_cnn;
    StreamNet& clipn = kind == StreamKind::Appearance ? app.cnn : mo.flow_cnn;
    RelationNet& rel = kind == StreamKind::Appearance ? app.relation : mo.relation;
    StreamTrainer trainer(ds, flows, cfg, kind, anchor, clipn, rel, entries);

    const fs::path ckpt = checkpoint_path(run_dir, kind, args.supervision);
    if (resume) {
      if (kind == StreamKind::Appearance) load_stream_checkpoint(ckpt, app, &trainer, cfg.hash());
      else load_stream_checkpoint(ckpt, mo, &trainer, cfg.hash());
      std::printf("resumed %s from epoch %llu\n", ckpt.string().c_str(),
                  (unsigned long long)trainer.epoch());
    }

    TrainHooks hooks;
    hooks.on_epoch_end = [&](uint64_t) {
      if (kind == StreamKind::Appearance) {
        save_stream_checkpoint(ckpt, app, &trainer, cfg.hash(), cfg.train.checkpoint_dtype);
      } else {
        save_stream_checkpoint(ckpt, mo, &trainer, cfg.hash(), cfg.train.checkpoint_dtype);
      }
    };
    hooks.on_halt = [&](const std::string& reason) {
      const fs::path emergency = ckpt.parent_path() / (ckpt.stem().string() + ".emergency.ckpt");
      if (kind == StreamKind::Appearance) {
        save_stream_checkpoint(emergency, app, &trainer, cfg.hash(), cfg.train.checkpoint_dtype);
      } else {
        save_stream_checkpoint(emergency, mo, &trainer, cfg.hash(), cfg.train.checkpoint_dtype);
      }
      std::fprintf(stderr, "halted: %s\nemergency checkpoint: %s\n", reason.c_str(),
                   emergency.string().c_str());
    };

    const TrainResult result = args.supervision == "weak" ? trainer.train_weak(hooks)
                                                          : trainer.train_strong(hooks);
    save_loss_csv(run_dir / "logs" /
                      ("train_" + std::string(stream_name(kind)) + "_" + args.supervision + ".csv"),
                  result.trace, resume);
    for (const auto& line : result.skip_log) std::printf("  %s\n", line.c_str());
    if (!result.mil_rounds.empty()) {
      std::string csv = "round,flipped,positives_remaining\n";
      for (const auto& r : result.mil_rounds) {
        csv += std::to_string(r.round) + "," + std::to_string(r.flipped) + "," +
               std::to_string(r.positives_remaining) + "\n";
        std::printf("  MIL round %d: flipped %zu, positives remaining %zu\n", r.round, r.flipped,
                    r.positives_remaining);
      }
      write_file_text(run_dir / "logs" / ("mil_" + std::string(stream_name(kind)) + ".csv"), csv);
    }
    double mean_total = 0;
    for (const auto& row : result.trace) mean_total += row.total;
    if (!result.trace.empty()) mean_total /= double(result.trace.size());
    std::printf("  %zu iterations, mean loss %.4f, checkpoint %s\n", result.trace.size(),
                mean_total, ckpt.string().c_str());
  };

  if (args.supervision != "strong" && args.supervision != "weak") {
    throw config_error("--supervision must be strong or weak");
  }
  if (stream_sel == "appearance" || stream_sel == "both") train_one(StreamKind::Appearance);
  if (stream_sel == "motion" || stream_sel == "both") train_one(StreamKind::Motion);
  if (stream_sel != "appearance" && stream_sel != "motion" && stream_sel != "both") {
    throw config_error("--stream must be appearance, motion, or both");
  }
  return 0;
}

struct EvalOutput {
  std::map<std::string, std::map<int, double>> acc;  // mode -> k -> value
};

EvalOutput evaluate_modes(const Dataset& ds, const RunConfig& cfg, const fs::path& run_dir,
                          const std::string& supervision, const std::string& split,
                          const std::vector<std::string>& modes, const std::vector<int>& ks) {
  LoadedModels models = load_models(run_dir, cfg, supervision, ds.frame_size());
  FlowCache flows(run_dir / "flowcache", cfg.flow);
  auto entries = ds.split_entries(split);
  if (entries.empty()) throw data_error("split '" + split + "' selects no clips");

  const GalleryIndex index =
      GalleryIndex::build(ds, entries, models.appearance, models.motion, flows);

  std::map<std::string, std::string> truth;
  std::vector<EmbeddedQuery> queries;
  for (const DatasetEntry* e : entries) {
    queries.push_back(embed_query(ds, *e, models.appearance, models.motion));
    truth[e->sketch_id] = e->clip_id;
  }

  std::map<std::string, std::vector<RankedResult>> per_mode;
  std::vector<RankedResult> app_ranked, mo_ranked;
  for (const auto& q : queries) {
    app_ranked.push_back(rank_gallery(q, index, RetrievalMode::Appearance));
    mo_ranked.push_back(rank_gallery(q, index, RetrievalMode::Motion));
  }
  for (const std::string& mode : modes) {
    std::vector<RankedResult> results;
    if (mode == "app") results = app_ranked;
    else if (mode == "motion") results = mo_ranked;
    else if (mode == "concat") {
      for (const auto& q : queries) results.push_back(rank_gallery(q, index, RetrievalMode::Concat));
    } else if (mode == "rankfuse") {
      for (size_t i = 0; i < queries.size(); ++i) {
        results.push_back(fuse_ranks(app_ranked[i], mo_ranked[i], cfg.retrieval.lambda2));
      }
    } else {
      throw config_error("unknown mode: " + mode);
    }
    per_mode[mode] = std::move(results);
  }

  fs::create_directories(run_dir / "results");
  EvalOutput out;
  for (const auto& [mode, results] : per_mode) {
    std::map<int, double> acc;
    for (int k : ks) acc[k] = acc_at_k(results, truth, k);
    double prev = 0;
    for (int k : ks) {  // sanity: cumulative accuracy is monotone in k
      if (acc[k] + 1e-12 < prev) throw numeric_error("acc@k not monotone for mode " + mode);
      prev = acc[k];
    }
    save_results_csv(run_dir / "results" / ("results_" + mode + "_" + supervision + ".csv"),
                     results, mode_from_string(mode));
    save_metrics_json(run_dir / "results" / ("metrics_" + mode + "_" + supervision + ".json"),
                      mode, acc, -1.0, cfg.hash(),
                      models.appearance.digest() * 0x100000001b3ULL ^ models.motion.digest());
    out.acc[mode] = acc;
  }
  return out;
}

int cmd_evaluate(const CommonArgs& args, const std::string& mode_sel, const std::string& ks_csv) {
  const fs::path run_dir = resolve_run_dir(args.run_dir);
  RunConfig cfg = resolve_config(args.config_path, run_dir);
  const Dataset ds = Dataset::load(args.dataset_dir);
  check_dataset_config(ds, cfg);
  const std::string split = args.split.empty() ? "test" : args.split;

  std::vector<std::string> modes;
  if (mode_sel == "all") modes = {"app", "motion", "rankfuse", "concat"};
  else modes = {mode_sel};

  std::vector<int> ks;
  std::stringstream ss(ks_csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) ks.push_back(std::stoi(item));
  }
  if (ks.empty()) ks = cfg.retrieval.ks;

  EvalOutput out = evaluate_modes(ds, cfg, run_dir, args.supervision, split, modes, ks);
  for (const auto& [mode, acc] : out.acc) {
    std::printf("%-9s", mode.c_str());
    for (const auto& [k, v] : acc) std::printf("  acc@%d=%.4f", k, v);
    std::printf("\n");
  }
  return 0;
}

int cmd_detect(const CommonArgs& args, const std::string& mode_sel) {
  const fs::path run_dir = resolve_run_dir(args.run_dir);
  RunConfig cfg = resolve_config(args.config_path, run_dir);
  const Dataset ds = Dataset::load(args.dataset_dir);
  check_dataset_config(ds, cfg);
  const std::string split = args.split.empty() ? "test" : args.split;
  const RetrievalMode mode = mode_from_string(mode_sel);
  if (mode == RetrievalMode::RankFuse) {
    throw config_error("detection traverses one clip; use app, motion, or concat");
  }

  LoadedModels models = load_models(run_dir, cfg, args.supervision, ds.frame_size());
  FlowCache flows(run_dir / "flowcache", cfg.flow);
  auto entries = ds.split_entries(split);
  if (entries.empty()) throw data_error("split '" + split + "' selects no clips");

  std::printf("sketch-based action detection (%s, %s supervision): success within 5 frames of "
              "the annotated interval\n",
              mode_sel.c_str(), args.supervision.c_str());

  size_t total = 0, hits = 0;
  std::string csv = "sketch_id,page,proposed_frame,truth_start,truth_end,success,mode\n";
  const GalleryIndex index = GalleryIndex::build(ds, entries, models.appearance, models.motion,
                                                 flows);
  for (const DatasetEntry* e : entries) {
    const EmbeddedQuery q = embed_query(ds, *e, models.appearance, models.motion);
    const AlignmentAnnotation& ann = ds.alignment(e->clip_id);
    const EmbeddedClip* clip = nullptr;
    for (const auto& c : index.clips()) {
      if (c.clip_id == e->clip_id) clip = &c;
    }
    for (size_t page = 1; page <= q.appearance.size(); ++page) {
      const DetectionResult r =
          detect_action(q, page, *clip, mode, ann.intervals.at(page - 1), 5);
      ++total;
      hits += r.success ? 1 : 0;
      csv += r.sketch_id + "," + std::to_string(r.page_index) + "," +
             std::to_string(r.proposed_frame) + "," + std::to_string(r.truth_interval[0]) + "," +
             std::to_string(r.truth_interval[1]) + "," + (r.success ? "1" : "0") + "," + mode_sel +
             "\n";
    }
  }
  const double accuracy = total ? double(hits) / double(total) : 0.0;
  fs::create_directories(run_dir / "results");
  write_file_text(run_dir / "results" / ("detect_" + mode_sel + "_" + args.supervision + ".csv"),
                  csv);
  json j;
  j["mode"] = mode_sel;
  j["supervision"] = args.supervision;
  j["tolerance_frames"] = 5;
  j["pages"] = total;
  j["detection_accuracy"] = accuracy;
  write_file_text(run_dir / "results" / ("detect_" + mode_sel + "_" + args.supervision + ".json"),
                  j.dump(2) + "\n");
  std::printf("detection accuracy: %.4f over %zu pages\n", accuracy, total);
  return 0;
}

int cmd_report(const std::string& run_dir_arg) {
  const fs::path run_dir = resolve_run_dir(run_dir_arg);
  const fs::path results = run_dir / "results";
  const std::vector<std::string> supervisions = {"strong", "weak"};
  const std::vector<std::string> modes = {"app", "motion", "rankfuse", "concat"};

  std::string table = "supervision  mode      acc@1    acc@5    acc@10   detection\n";
  std::string csv = "supervision,mode,acc1,acc5,acc10,detection\n";
  for (const auto& sup : supervisions) {
    for (const auto& mode : modes) {
      const fs::path metrics = results / ("metrics_" + mode + "_" + sup + ".json");
      const fs::path det = results / ("detect_" + mode + "_" + sup + ".json");
      std::string acc1 = "absent", acc5 = "absent", acc10 = "absent", detect = "absent";
      if (fs::exists(metrics)) {
        json j = json::parse(read_file_text(metrics));
        auto get = [&](const std::string& key) -> std::string {
          if (!j.at("accuracy").contains(key)) return "absent";
          char buf[32];
          std::snprintf(buf, sizeof buf, "%.4f", j.at("accuracy").at(key).get<double>());
          return buf;
        };
        acc1 = get("acc@1");
        acc5 = get("acc@5");
        acc10 = get("acc@10");
      }
      if (fs::exists(det)) {
        json j = json::parse(read_file_text(det));
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4f", j.at("detection_accuracy").get<double>());
        detect = buf;
      }
      char line[160];
      std::snprintf(line, sizeof line, "%-12s %-9s %-8s %-8s %-8s %s\n", sup.c_str(), mode.c_str(),
                    acc1.c_str(), acc5.c_str(), acc10.c_str(), detect.c_str());
      table += line;
      csv += sup + "," + mode + "," + acc1 + "," + acc5 + "," + acc10 + "," + detect + "\n";
    }
  }
  fs::create_directories(run_dir / "report");
  write_file_text(run_dir / "report" / "report.txt", table);
  write_file_text(run_dir / "report" / "report.csv", csv);
  std::fputs(table.c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fine-grained sketch-based video retrieval pipeline"};
  app.require_subcommand(1);

  // generate
  std::string gen_out, gen_config;
  std::optional<uint64_t> gen_seed;
  auto* generate = app.add_subcommand("generate", "procedurally generate a paired dataset");
  generate->add_option("--out", gen_out, "output dataset directory")->required();
  generate->add_option("--config", gen_config, "run config file");
  generate->add_option("--seed", gen_seed, "override the config seed");

  // train
  CommonArgs train_args;
  bool train_resume = false;
  std::string train_stream = "both";
  auto* train = app.add_subcommand("train", "train stream embeddings");
  train->add_option("--dataset", train_args.dataset_dir, "dataset directory")->required();
  train->add_option("--run", train_args.run_dir, "run directory");
  train->add_option("--config", train_args.config_path, "run config file");
  train->add_option("--supervision", train_args.supervision, "strong|weak")
      ->check(CLI::IsMember({"strong", "weak"}));
  train->add_option("--stream", train_stream, "appearance|motion|both")
      ->check(CLI::IsMember({"appearance", "motion", "both"}));
  train->add_option("--split", train_args.split, "train|val|test|all (default train)");
  train->add_flag("--resume", train_resume, "continue from the stream checkpoint");

  // evaluate
  CommonArgs eval_args;
  std::string eval_mode = "all", eval_ks;
  auto* evaluate = app.add_subcommand("evaluate", "rank the gallery and report acc@K");
  evaluate->add_option("--dataset", eval_args.dataset_dir, "dataset directory")->required();
  evaluate->add_option("--run", eval_args.run_dir, "run directory");
  evaluate->add_option("--config", eval_args.config_path, "run config file");
  evaluate->add_option("--supervision", eval_args.supervision, "strong|weak")
      ->check(CLI::IsMember({"strong", "weak"}));
  evaluate->add_option("--mode", eval_mode, "app|motion|rankfuse|concat|all");
  evaluate->add_option("--k", eval_ks, "comma-separated ranks (default 1,5,10)");
  evaluate->add_option("--split", eval_args.split, "train|val|test|all (default test)");

  // detect
  CommonArgs det_args;
  std::string det_mode = "concat";
  auto* detect = app.add_subcommand("detect", "locate each sketch page within its true clip");
  detect->add_option("--dataset", det_args.dataset_dir, "dataset directory")->required();
  detect->add_option("--run", det_args.run_dir, "run directory");
  detect->add_option("--config", det_args.config_path, "run config file");
  detect->add_option("--supervision", det_args.supervision, "strong|weak")
      ->check(CLI::IsMember({"strong", "weak"}));
  detect->add_option("--mode", det_mode, "app|motion|concat");
  detect->add_option("--split", det_args.split, "train|val|test|all (default test)");

  // report
  std::string report_run;
  auto* report = app.add_subcommand("report", "aggregate metrics across modes and supervisions");
  report->add_option("--run", report_run, "run directory");

  try {
    app.parse(argc, argv);
    if (generate->parsed()) return cmd_generate(gen_out, gen_config, gen_seed);
    if (train->parsed()) return cmd_train(train_args, train_resume, train_stream);
    if (evaluate->parsed()) return cmd_evaluate(eval_args, eval_mode, eval_ks);
    if (detect->parsed()) return cmd_detect(det_args, det_mode);
    if (report->parsed()) return cmd_report(report_run);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;  // usage/config problems share one exit code
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 1;
  }
  return 0;
}
