#include "strokeseg/pipeline.hpp"

#include <cstdio>
#include <set>

#include "binary_io.hpp"
#include "kv.hpp"

namespace strokeseg {

namespace {

void make_dirs(const std::filesystem::path& p) {
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  require(!ec, ErrorKind::kIo, "cannot create directory " + p.string());
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
  return s;
}

std::string means_line(const std::string& prefix, const std::array<double, 6>& m) {
  std::string s = prefix;
  for (std::size_t k = 0; k < 6; ++k) s += std::string(" ") + kReportColumns[k] + "=" + kv::format_double(m[k]);
  return s;
}

const std::vector<std::string>& split_ids(const FoldSplit& f, const std::string& split) {
  if (split == "train") return f.train;
  if (split == "val") return f.val;
  if (split == "test") return f.test;
  fail(ErrorKind::kInvalidArgument, "split must be train, val or test, got '" + split + "'");
}

}  // namespace

std::vector<FoldSplit> folds_for(const Manifest& manifest, const RunConfig& config) {
  return make_folds(manifest.subject_ids(), config.train.seed, config.proportional_folds);
}

void verify_folds(const std::vector<FoldSplit>& folds) {
  std::set<std::string> seen;
  for (const auto& f : folds) {
    for (const auto& id : f.test)
      require(seen.insert(id).second, ErrorKind::kInvalidArgument,
              "folds: subject " + id + " appears in more than one test set");
    std::set<std::string> train(f.train.begin(), f.train.end());
    for (const auto& id : f.test)
      require(!train.contains(id), ErrorKind::kInvalidArgument,
              "folds: subject " + id + " is in both train and test of fold " + std::to_string(f.fold));
    for (const auto& id : f.val)
      require(!train.contains(id), ErrorKind::kInvalidArgument,
              "folds: subject " + id + " is in both train and val of fold " + std::to_string(f.fold));
  }
}

TrainRun train_fold(const RunConfig& config, const std::filesystem::path& manifest_path, int fold,
                    const std::filesystem::path& out_dir, const Progress& progress) {
  require(fold >= 0 && fold < kNumFolds, ErrorKind::kInvalidArgument, "fold must be 0, 1 or 2");
  const Manifest manifest = read_manifest(manifest_path);
  const auto folds = folds_for(manifest, config);
  verify_folds(folds);
  make_dirs(out_dir);
  bin::write_text(out_dir / "config.txt", serialize_run_config(config));
  const FoldSplit& split = folds[fold];
  bin::write_text(out_dir / "split.txt", "fold=" + std::to_string(fold) + "\ntrain=" + join(split.train) +
                                             "\nval=" + join(split.val) + "\ntest=" + join(split.test) + "\n");
  const FitData data = prepare_fold(manifest, split);
  FitOptions opts;
  opts.out_dir = out_dir;
  opts.fold = fold;
  opts.progress = progress;
  return {split, fit(config, data, opts)};
}

EvalRun evaluate_checkpoint(const std::filesystem::path& checkpoint, const std::filesystem::path& manifest_path,
                            int fold, const std::string& split, const std::filesystem::path& out_dir,
                            bool overlays) {
  require(fold >= 0 && fold < kNumFolds, ErrorKind::kInvalidArgument, "fold must be 0, 1 or 2");
  const Archive archive = Archive::load(checkpoint);
  const CheckpointInfo info = read_checkpoint_info(archive);
  SegmentationNet net = load_segmentation(archive, info);
  const Manifest manifest = read_manifest(manifest_path);
  require(manifest.sequences == info.stats.sequences, ErrorKind::kIncompatible,
          "checkpoint was trained on sequences " + join(info.stats.sequences) + " but the manifest lists " +
              join(manifest.sequences));
  const auto folds = folds_for(manifest, info.config);
  const auto& ids = split_ids(folds[fold], split);
  require(!ids.empty(), ErrorKind::kInvalidArgument, "split '" + split + "' of fold " + std::to_string(fold) + " is empty");
  const SliceDataset data = extract_slices(manifest, ids, info.stats);

  make_dirs(out_dir);
  const auto overlay_dir = out_dir / "overlays";
  if (overlays) make_dirs(overlay_dir);
  SliceSink sink;
  if (overlays) {
    sink = [&](const SliceSample& s, const LabelMap& pred, const LabelMap& gt) {
      char name[256];
      for (int cls : kLesionClasses) {
        std::snprintf(name, sizeof name, "%s_z%03d_%s.ppm", s.subject.c_str(), s.slice,
                      cls == kPenumbra ? "pen" : "core");
        write_ppm(overlay_dir / name, render_overlay(pred, gt, cls));
      }
    };
  }
  EvalRun run;
  run.split = split;
  run.summary.fold = fold;
  run.summary.subjects = evaluate_slices(net, data, info.config.train.batch_size, sink);

  std::string out = "split=" + split + "\nfold=" + std::to_string(fold) +
                    "\ncheckpoint_fold=" + std::to_string(info.fold) +
                    "\ncheckpoint_epoch=" + std::to_string(info.epoch) + "\n";
  for (const auto& m : run.summary.subjects) {
    out += "kind=subject subject=" + m.subject;
    const std::array<double, 6> v = {m.penumbra.dice, m.core.dice, m.penumbra.precision,
                                     m.core.precision, m.penumbra.recall, m.core.recall};
    for (std::size_t k = 0; k < 6; ++k) out += std::string(" ") + kReportColumns[k] + "=" + kv::format_double(v[k]);
    for (int cls : kLesionClasses) {
      const ClassCounts& c = m.counts[cls];
      const std::string sfx = cls == kPenumbra ? "_pen" : "_core";
      out += " tp" + sfx + "=" + std::to_string(c.tp) + " fp" + sfx + "=" + std::to_string(c.fp) + " fn" + sfx +
             "=" + std::to_string(c.fn) + " tn" + sfx + "=" + std::to_string(c.tn);
    }
    out += "\n";
  }
  out += means_line("kind=fold_summary", fold_means(run.summary)) + "\n";
  bin::write_text(out_dir / "metrics.txt", out);
  return run;
}

CrossvalRun crossval(const RunConfig& config, const std::filesystem::path& manifest_path,
                     const std::filesystem::path& out_dir, const Progress& progress) {
  const Manifest manifest = read_manifest(manifest_path);
  verify_folds(folds_for(manifest, config));
  make_dirs(out_dir);
  bin::write_text(out_dir / "config.txt", serialize_run_config(config));

  CrossvalRun run;
  std::string means_text;
  for (int f = 0; f < kNumFolds; ++f) {
    const auto fold_dir = out_dir / ("fold" + std::to_string(f));
    if (progress) progress("fold " + std::to_string(f) + ": training");
    const TrainRun tr = train_fold(config, manifest_path, f, fold_dir, progress);
    if (progress) progress("fold " + std::to_string(f) + ": testing best epoch " + std::to_string(tr.fit.best_epoch));
    const EvalRun er = evaluate_checkpoint(tr.fit.best_checkpoint, manifest_path, f, "test", fold_dir / "test");
    run.fold_means.push_back(fold_means(er.summary));
    means_text += means_line("fold=" + std::to_string(f), run.fold_means.back()) + "\n";
    bin::write_text(out_dir / "fold_means.txt", means_text);
  }
  run.row = aggregate_fold_means(config.name, run.fold_means);
  ReportTable table{{run.row}};
  emit_report(table, ReportFormat::kMarkdown, out_dir / "report.md");
  emit_report(table, ReportFormat::kCsv, out_dir / "report.csv");
  return run;
}

ReportTable merge_reports(const std::vector<std::filesystem::path>& csv_paths) {
  require(!csv_paths.empty(), ErrorKind::kInvalidArgument, "report: no input reports");
  ReportTable merged;
  for (const auto& p : csv_paths) {
    const ReportTable t = parse_csv_report(bin::read_text(p));
    merged.rows.insert(merged.rows.end(), t.rows.begin(), t.rows.end());
  }
  return merged;
}

}  // namespace strokeseg
