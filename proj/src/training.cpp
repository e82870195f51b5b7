#include "strokeseg/training.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "binary_io.hpp"
#include "kv.hpp"

namespace strokeseg {

Tensor class_mask(const LabelMap& labels, int cls) {
  Tensor m({labels.n, 1, labels.h, labels.w});
  for (std::size_t i = 0; i < labels.size(); ++i) m[i] = labels.labels[i] == cls ? real(1) : real(0);
  return m;
}

TuringPair make_turing_pair(Var images, const Tensor& gt_mask, Var pred_mask, const std::vector<bool>& gt_first) {
  Tape& tape = *images.tape;
  const Shape si = images.shape(), sp = pred_mask.shape();
  require(gt_mask.shape() == sp, ErrorKind::kShape,
          "turing pair: ground truth " + gt_mask.shape().str() + " and prediction " + sp.str() + " differ");
  require(sp.c == 1 && sp.n == si.n && sp.h == si.h && sp.w == si.w, ErrorKind::kShape,
          "turing pair: masks " + sp.str() + " do not match images " + si.str());
  require(static_cast<int>(gt_first.size()) == si.n, ErrorKind::kShape, "turing pair: one choice per sample");
  for (std::size_t i = 0; i < pred_mask.value().numel(); ++i) {
    const real p = pred_mask.value()[i];
    require(p >= 0 && p <= 1, ErrorKind::kInvalidArgument, "turing pair: predicted mask outside [0, 1]");
  }

  const std::size_t plane = sp.plane();
  Tensor sel(sp), nsel(sp), target({si.n, 1, 1, 1});
  for (int b = 0; b < si.n; ++b) {
    const real s = gt_first[b] ? real(1) : real(0);
    std::fill_n(sel.data() + b * plane, plane, s);
    std::fill_n(nsel.data() + b * plane, plane, real(1) - s);
    target[b] = s;
  }
  const Var gt = tape.constant(gt_mask);
  const Var vs = tape.constant(std::move(sel)), vn = tape.constant(std::move(nsel));
  const Var slot_a = add(mul(vs, gt), mul(vn, pred_mask));
  const Var slot_b = add(mul(vn, gt), mul(vs, pred_mask));
  return {concat_channels(concat_channels(images, slot_a), slot_b), std::move(target)};
}

TuringPair make_turing_pair(Var images, const Tensor& gt_mask, Var pred_mask, Rng& rng) {
  std::vector<bool> heads(images.shape().n);
  for (std::size_t b = 0; b < heads.size(); ++b) heads[b] = rng.coin();
  return make_turing_pair(images, gt_mask, pred_mask, heads);
}

std::vector<std::vector<int>> random_channel_perms(int batch, Rng& rng) {
  std::vector<std::vector<int>> perms(batch);
  for (auto& p : perms) {
    p = {0, 1, 2};
    rng.shuffle(p);
  }
  return perms;
}

Tensor penumbra_position_targets(const std::vector<std::vector<int>>& perms) {
  Tensor t({static_cast<int>(perms.size()), 3, 1, 1});
  for (std::size_t b = 0; b < perms.size(); ++b) {
    require(perms[b].size() == 3, ErrorKind::kShape, "channel permutation must have 3 entries");
    for (int j = 0; j < 3; ++j) t[b * 3 + j] = perms[b][j] == kPenumbra ? real(1) : real(0);
  }
  return t;
}

std::string PhaseReport::log_line() const {
  std::string s = "kind=batch epoch=" + std::to_string(epoch) + " batch=" + std::to_string(batch) +
                  " phases=" + std::to_string(phases) + " j_seg=" + kv::format_double(j_seg);
  if (phases == 5) {
    s += " train_d1=" + kv::format_double(train_d1) + " train_d2=" + kv::format_double(train_d2) +
         " train_d3=" + kv::format_double(train_d3) + " j_d1=" + kv::format_double(j_d1) +
         " j_d2=" + kv::format_double(j_d2) + " j_d3=" + kv::format_double(j_d3) +
         " j_adv=" + kv::format_double(j_adv);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Trainer

struct Trainer::SegPass {
  Tape tape;
  Var images;
  SegmentationNet::Output out;
};

Trainer::Trainer(const TrainConfig& cfg, int in_channels)
    : cfg_(cfg),
      seg_((cfg.validate(), cfg.segnet(in_channels)), cfg.seed),
      pairing_(Rng::stream(cfg.seed, "pairing")),
      channel_(Rng::stream(cfg.seed, "channel_shuffle")) {
  for (int k = 1; k <= 3; ++k) {
    const std::uint64_t s = Rng::stream(cfg.seed, "init/d" + std::to_string(k)).next();
    discs_[k - 1] = std::make_unique<Discriminator>(cfg.discriminator(k, in_channels), s);
  }
  for (int k = 0; k < 4; ++k) opts_[k] = AdamState::for_store(store(k), cfg.adam());
}

Discriminator& Trainer::disc(int which) {
  require(which >= 1 && which <= 3, ErrorKind::kInvalidArgument, "discriminator index must be 1, 2 or 3");
  return *discs_[which - 1];
}

AdamState& Trainer::optimizer(int which) {
  require(which >= 0 && which <= 3, ErrorKind::kInvalidArgument, "optimizer index must be 0..3");
  return opts_[which];
}

ParamStore& Trainer::store(int which) { return which == 0 ? seg_.params() : disc(which).params(); }

std::unique_ptr<Trainer::SegPass> Trainer::seg_pass(const Batch& batch, bool trainable) {
  auto pass = std::make_unique<SegPass>();
  pass->images = pass->tape.constant(batch.images);
  pass->out = seg_.forward(pass->images, BatchNormMode::kTrainNoUpdate, trainable);
  return pass;
}

double Trainer::phase1_seg_step(const Batch& batch) {
  Tape tape;
  const auto out = seg_.forward(tape.constant(batch.images), BatchNormMode::kTrain, true);
  const Var loss = cross_entropy(out.logits, batch.labels);
  seg_.params().zero_grad();
  tape.backward(loss);
  adam_step(seg_.params(), opts_[0]);
  return loss.value()[0];
}

double Trainer::pair_step(int which, const Batch& batch, const Tensor& probs) {
  Discriminator& d = disc(which);
  Tape tape;
  const Var images = tape.constant(batch.images);
  const Var pred = select_channel(tape.constant(probs), which);
  const TuringPair pair = make_turing_pair(images, class_mask(batch.labels, which), pred, pairing_);
  const Var loss = binary_cross_entropy(d.forward(pair.input, BatchNormMode::kTrain, true), pair.target);
  d.params().zero_grad();
  tape.backward(loss);
  adam_step(d.params(), opts_[which]);
  return loss.value()[0];
}

double Trainer::channel_step(const Tensor& probs) {
  Discriminator& d = disc(3);
  Tape tape;
  const auto perms = random_channel_perms(probs.shape().n, channel_);
  const Var x = permute_channels(tape.constant(probs), perms);
  const Var loss =
      binary_cross_entropy(d.forward(x, BatchNormMode::kTrain, true), penumbra_position_targets(perms));
  d.params().zero_grad();
  tape.backward(loss);
  adam_step(d.params(), opts_[3]);
  return loss.value()[0];
}

AdversarialLosses Trainer::adversarial_step(const Batch& batch, SegPass& pass) {
  const Var probs = pass.out.probs;
  Var j[3];
  for (int k = 1; k <= 2; ++k) {
    const TuringPair pair =
        make_turing_pair(pass.images, class_mask(batch.labels, k), select_channel(probs, k), pairing_);
    j[k - 1] = binary_cross_entropy(disc(k).forward(pair.input, BatchNormMode::kTrainNoUpdate, false), pair.target);
  }
  const auto perms = random_channel_perms(probs.shape().n, channel_);
  j[2] = binary_cross_entropy(disc(3).forward(permute_channels(probs, perms), BatchNormMode::kTrainNoUpdate, false),
                              penumbra_position_targets(perms));
  const Var weighted = add(add(scale(j[0], static_cast<real>(cfg_.alpha)), scale(j[1], static_cast<real>(cfg_.beta))),
                           scale(j[2], static_cast<real>(cfg_.gamma)));
  const Var j_adv = scale(weighted, real(-1));
  seg_.params().zero_grad();
  pass.tape.backward(j_adv);
  adam_step(seg_.params(), opts_[0]);
  return {j[0].value()[0], j[1].value()[0], j[2].value()[0], j_adv.value()[0]};
}

double Trainer::phase2_d1_step(const Batch& batch) { return pair_step(1, batch, seg_pass(batch, false)->out.probs.value()); }
double Trainer::phase3_d2_step(const Batch& batch) { return pair_step(2, batch, seg_pass(batch, false)->out.probs.value()); }
double Trainer::phase4_d3_step(const Batch& batch) { return channel_step(seg_pass(batch, false)->out.probs.value()); }

AdversarialLosses Trainer::phase5_adv_step(const Batch& batch) {
  auto pass = seg_pass(batch, true);
  return adversarial_step(batch, *pass);
}

PhaseReport Trainer::train_batch(const Batch& batch, int epoch, int index, bool adversarial) {
  PhaseReport r;
  r.epoch = epoch;
  r.batch = index;
  r.phases = adversarial ? 5 : 1;
  auto check = [&](double v, const char* what, int phase) {
    require(std::isfinite(v), ErrorKind::kNumeric,
            std::string("non-finite ") + what + " in phase " + std::to_string(phase) + " (epoch " +
                std::to_string(epoch) + ", batch " + std::to_string(index) + ")");
  };
  r.j_seg = phase1_seg_step(batch);
  check(r.j_seg, "J_Seg", 1);
  if (!adversarial) return r;

  auto pass = seg_pass(batch, true);
  const Tensor probs = pass->out.probs.value();
  r.train_d1 = pair_step(1, batch, probs);
  check(r.train_d1, "J_D1", 2);
  r.train_d2 = pair_step(2, batch, probs);
  check(r.train_d2, "J_D2", 3);
  r.train_d3 = channel_step(probs);
  check(r.train_d3, "J_D3", 4);
  const AdversarialLosses a = adversarial_step(batch, *pass);
  r.j_d1 = a.j_d1;
  r.j_d2 = a.j_d2;
  r.j_d3 = a.j_d3;
  r.j_adv = a.j_adv;
  check(r.j_adv, "J_Adv", 5);
  return r;
}

namespace {
const char* kNetPrefix[4] = {"seg/", "d1/", "d2/", "d3/"};
const char* kOptPrefix[4] = {"opt/seg/", "opt/d1/", "opt/d2/", "opt/d3/"};
}  // namespace

void Trainer::save_state(Archive& a) const {
  auto& self = const_cast<Trainer&>(*this);
  for (int k = 0; k < 4; ++k) {
    const ParamStore& s = self.store(k);
    a.put_store(kNetPrefix[k], s);
    const AdamState& o = opts_[k];
    a.put_u64(std::string(kOptPrefix[k]) + "step", o.step);
    std::size_t i = 0;
    for (const auto& e : s) {
      if (e.param.trainable) {
        a.put_tensor(std::string(kOptPrefix[k]) + e.name + ".m", o.m[i]);
        a.put_tensor(std::string(kOptPrefix[k]) + e.name + ".v", o.v[i]);
      }
      ++i;
    }
  }
  a.put_text("rng/pairing", pairing_.state());
  a.put_text("rng/channel_shuffle", channel_.state());
}

void Trainer::load_state(const Archive& a) {
  // Decode into temporaries first; assign only when everything matched.
  std::array<AdamState, 4> opts = opts_;
  for (int k = 0; k < 4; ++k) {
    ParamStore& s = store(k);
    opts[k].step = a.get_u64(std::string(kOptPrefix[k]) + "step");
    std::size_t i = 0;
    for (const auto& e : s) {
      if (e.param.trainable) {
        for (auto [suffix, dst] : {std::pair{".m", &opts[k].m[i]}, std::pair{".v", &opts[k].v[i]}}) {
          Tensor t = a.get_tensor(std::string(kOptPrefix[k]) + e.name + suffix);
          require(t.shape() == e.param.value.shape(), ErrorKind::kIncompatible,
                  std::string("checkpoint: optimizer state for ") + kNetPrefix[k] + e.name + " has the wrong shape");
          *dst = std::move(t);
        }
      }
      ++i;
    }
  }
  Rng pairing, channel;
  pairing.set_state(a.get_text("rng/pairing"));
  channel.set_state(a.get_text("rng/channel_shuffle"));
  std::array<std::vector<Tensor>, 4> saved;
  for (int k = 0; k < 4; ++k) saved[k] = store(k).snapshot();
  try {
    for (int k = 0; k < 4; ++k) a.get_store(kNetPrefix[k], store(k));
  } catch (...) {
    for (int k = 0; k < 4; ++k) {
      std::size_t i = 0;
      for (auto& e : store(k)) e.param.value = saved[k][i++];
    }
    throw;
  }
  opts_ = std::move(opts);
  pairing_ = pairing;
  channel_ = channel;
}

// ---------------------------------------------------------------------------
// Evaluation over slices

namespace {
LabelMap crop(const LabelMap& m, int b, const SliceSample& s) {
  LabelMap out(1, s.orig_h, s.orig_w);
  for (int y = 0; y < s.orig_h; ++y)
    for (int x = 0; x < s.orig_w; ++x) out.labels[y * s.orig_w + x] = m.at(b, y + s.pad.top, x + s.pad.left);
  return out;
}
}  // namespace

std::vector<SubjectMetrics> evaluate_slices(SegmentationNet& net, const SliceDataset& data, int batch_size,
                                            const SliceSink& sink) {
  require(batch_size >= 1, ErrorKind::kInvalidArgument, "evaluation batch size must be >= 1");
  std::vector<SubjectMetrics> out;
  for (const auto& [subject, indices] : data.by_subject()) {
    ConfusionCounts counts;
    for (std::size_t start = 0; start < indices.size(); start += batch_size) {
      const std::vector<std::size_t> chunk(indices.begin() + start,
                                           indices.begin() + std::min(indices.size(), start + batch_size));
      auto [x, y] = data.batch(chunk);
      const LabelMap pred = argmax_labels(net.predict(x));
      for (std::size_t b = 0; b < chunk.size(); ++b) {
        const SliceSample& s = data.samples[chunk[b]];
        const LabelMap p = crop(pred, static_cast<int>(b), s), g = crop(y, static_cast<int>(b), s);
        counts += confusion(p, g);
        if (sink) sink(s, p, g);
      }
    }
    out.push_back(subject_metrics(subject, counts));
  }
  return out;
}

ValidationScore validation_score(const std::vector<SubjectMetrics>& subjects) {
  ValidationScore s;
  if (subjects.empty()) return s;
  for (const auto& m : subjects) {
    s.dice_pen += m.penumbra.dice;
    s.dice_core += m.core.dice;
  }
  s.dice_pen /= static_cast<double>(subjects.size());
  s.dice_core /= static_cast<double>(subjects.size());
  return s;
}

FitData prepare_fold(const Manifest& manifest, const FoldSplit& split) {
  FitData d;
  d.stats = compute_whitening(manifest, split.train);
  d.train = extract_slices(manifest, split.train, d.stats);
  if (!split.val.empty()) d.val = extract_slices(manifest, split.val, d.stats);
  return d;
}

// ---------------------------------------------------------------------------
// Checkpoint metadata

void write_checkpoint_info(Archive& a, const CheckpointInfo& info) {
  a.put_text("meta/config", serialize_run_config(info.config));
  a.put_u64("meta/in_channels", static_cast<std::uint64_t>(info.in_channels));
  a.put_u64("meta/fold", static_cast<std::uint64_t>(info.fold));
  a.put_f64("meta/epoch", {static_cast<double>(info.epoch)});
  a.put_f64("meta/val_dice", {info.score.dice_pen, info.score.dice_core});
  a.put_f64("meta/best", {info.best_metric, static_cast<double>(info.best_epoch)});
  std::string seqs;
  for (std::size_t i = 0; i < info.stats.sequences.size(); ++i) seqs += (i ? "," : "") + info.stats.sequences[i];
  a.put_text("whitening/sequences", seqs);
  a.put_f64("whitening/mean", info.stats.mean);
  a.put_f64("whitening/std", info.stats.stddev);
}

CheckpointInfo read_checkpoint_info(const Archive& a) {
  CheckpointInfo info;
  try {
    info.config = parse_run_config(a.get_text("meta/config"));
  } catch (const Error& e) {
    fail(ErrorKind::kIncompatible, std::string("checkpoint carries an unreadable config: ") + e.what());
  }
  info.in_channels = static_cast<int>(a.get_u64("meta/in_channels"));
  info.fold = static_cast<int>(a.get_u64("meta/fold"));
  const auto epoch = a.get_f64("meta/epoch");
  const auto val = a.get_f64("meta/val_dice");
  const auto best = a.get_f64("meta/best");
  require(epoch.size() == 1 && val.size() == 2 && best.size() == 2, ErrorKind::kIncompatible,
          "checkpoint: malformed metadata");
  info.epoch = static_cast<int>(epoch[0]);
  info.score = {val[0], val[1]};
  info.best_metric = best[0];
  info.best_epoch = static_cast<int>(best[1]);
  info.stats.sequences = kv::split(a.get_text("whitening/sequences"), ',');
  info.stats.mean = a.get_f64("whitening/mean");
  info.stats.stddev = a.get_f64("whitening/std");
  require(info.stats.mean.size() == info.stats.sequences.size() &&
              info.stats.stddev.size() == info.stats.sequences.size() &&
              static_cast<int>(info.stats.sequences.size()) == info.in_channels,
          ErrorKind::kIncompatible, "checkpoint: whitening statistics do not match the channel count");
  return info;
}

SegmentationNet load_segmentation(const Archive& archive, const CheckpointInfo& info) {
  SegmentationNet net(info.config.train.segnet(info.in_channels), info.config.train.seed);
  archive.get_store("seg/", net.params());
  return net;
}

// ---------------------------------------------------------------------------
// fit

namespace {

std::string epoch_line(int epoch, double mean_seg, bool have_val, const ValidationScore& v, double best_metric,
                       int best_epoch) {
  std::string s = "kind=epoch epoch=" + std::to_string(epoch) + " mean_j_seg=" + kv::format_double(mean_seg);
  if (have_val) {
    s += " val_dice_pen=" + kv::format_double(v.dice_pen) + " val_dice_core=" + kv::format_double(v.dice_core) +
         " val_metric=" + kv::format_double(v.metric());
  } else {
    s += " val=none";
  }
  s += " best_metric=" + kv::format_double(best_metric) + " best_epoch=" + std::to_string(best_epoch);
  return s;
}

// Log lines up to and including the given epoch.
std::string truncate_log(const std::string& log, int last_epoch) {
  std::istringstream in(log);
  std::string line, out;
  while (std::getline(in, line)) {
    const auto pos = line.find(" epoch=");
    if (pos == std::string::npos) continue;
    const auto end = line.find(' ', pos + 7);
    const int e = kv::to_number<int>(line.substr(pos + 7, end - pos - 7), ErrorKind::kFormat, "train.log epoch");
    if (e <= last_epoch) out += line + "\n";
  }
  return out;
}

}  // namespace

FitResult fit(const RunConfig& config, const FitData& data, const FitOptions& options) {
  const TrainConfig& cfg = config.train;
  cfg.validate();
  require(!data.train.samples.empty(), ErrorKind::kInvalidArgument, "fit: empty training set");
  std::error_code ec;
  std::filesystem::create_directories(options.out_dir, ec);
  require(!ec, ErrorKind::kIo, "fit: cannot create " + options.out_dir.string());

  const auto last_path = options.out_dir / "last.ckpt";
  const auto best_path = options.out_dir / "best.ckpt";
  const auto log_path = options.out_dir / "train.log";
  const int in_channels = data.train.channels;

  Trainer trainer(cfg, in_channels);
  Rng order = Rng::stream(cfg.seed, "batches");
  int start_epoch = 0;
  double best_metric = 0;
  int best_epoch = -1;
  std::string log;

  if (options.resume && std::filesystem::exists(last_path)) {
    const Archive a = Archive::load(last_path);
    const CheckpointInfo info = read_checkpoint_info(a);
    require(info.config == config && info.in_channels == in_channels && info.fold == options.fold,
            ErrorKind::kIncompatible, "fit: " + last_path.string() + " was written by a different run configuration");
    trainer.load_state(a);
    order.set_state(a.get_text("rng/batches"));
    start_epoch = info.epoch + 1;
    best_metric = info.best_metric;
    best_epoch = info.best_epoch;
    if (std::filesystem::exists(log_path)) log = truncate_log(bin::read_text(log_path), info.epoch);
  } else if (!config.encoder_init.empty()) {
    import_encoder_weights(trainer.seg(), std::filesystem::path(config.encoder_init));
  }

  FitResult result;
  result.best_checkpoint = best_path;
  result.last_checkpoint = last_path;
  const bool have_val = !data.val.samples.empty();
  const std::size_t n = data.train.samples.size();
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    order.shuffle(idx);
    const bool adversarial = cfg.adversarial && epoch >= cfg.warmup_epochs;
    double seg_sum = 0;
    int batches = 0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::vector<std::size_t> chunk(idx.begin() + start, idx.begin() + std::min(n, start + bs));
      auto [x, y] = data.train.batch(chunk);
      const PhaseReport r = trainer.train_batch({std::move(x), std::move(y)}, epoch, batches, adversarial);
      log += r.log_line() + "\n";
      seg_sum += r.j_seg;
      ++batches;
    }

    ValidationScore score;
    if (have_val) score = validation_score(evaluate_slices(trainer.seg(), data.val, cfg.batch_size));
    const bool improved = best_epoch < 0 || !have_val || score.metric() > best_metric;
    if (improved) {
      best_metric = have_val ? score.metric() : 0.0;
      best_epoch = epoch;
    }
    const std::string line = epoch_line(epoch, seg_sum / batches, have_val, score, best_metric, best_epoch);
    log += line + "\n";

    Archive a;
    write_checkpoint_info(a, {config, in_channels, options.fold, epoch, score, best_metric, best_epoch, data.stats});
    trainer.save_state(a);
    a.put_text("rng/batches", order.state());
    if (improved) a.save(best_path);
    a.save(last_path);
    bin::write_text(log_path, log);
    ++result.epochs_run;
    if (options.progress) options.progress(line);
  }
  result.best_epoch = best_epoch;
  result.best_metric = best_metric;
  return result;
}

}  // namespace strokeseg
