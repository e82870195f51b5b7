#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "strokeseg/adam.hpp"
#include "strokeseg/checkpoint.hpp"
#include "strokeseg/config.hpp"
#include "strokeseg/data_io.hpp"
#include "strokeseg/evaluation.hpp"
#include "strokeseg/networks.hpp"
#include "strokeseg/rng.hpp"

namespace strokeseg {

struct Batch {
  Tensor images;    // (B, T, H, W), whitened
  LabelMap labels;  // (B, H, W), values in {0,1,2}
};

/// Binary (B, 1, H, W) mask of one class.
Tensor class_mask(const LabelMap& labels, int cls);

/// Discriminator input [images, slot A, slot B] and per-sample target
/// (B, 1, 1, 1): 1 when slot A holds the ground truth.
struct TuringPair {
  Var input;
  Tensor target;
};

/// gt_first[b] puts the ground truth in slot A for sample b. The ground
/// truth enters as a constant; pred_mask keeps its gradient path.
TuringPair make_turing_pair(Var images, const Tensor& gt_mask, Var pred_mask, const std::vector<bool>& gt_first);
/// Ground truth goes first with probability 1/2 per sample.
TuringPair make_turing_pair(Var images, const Tensor& gt_mask, Var pred_mask, Rng& rng);

/// One uniform permutation of (0, 1, 2) per sample.
std::vector<std::vector<int>> random_channel_perms(int batch, Rng& rng);
/// One-hot (B, 3, 1, 1) of where the penumbra channel lands after perms.
Tensor penumbra_position_targets(const std::vector<std::vector<int>>& perms);

/// Per-batch losses. j_d1..j_d3 and j_adv come from Phase 5 (fresh pairings),
/// train_d1..train_d3 are the losses the discriminators were updated on in
/// Phases 2-4. With phases == 1 only j_seg is meaningful.
struct PhaseReport {
  int epoch = 0;
  int batch = 0;
  int phases = 1;
  double j_seg = 0;
  double train_d1 = 0, train_d2 = 0, train_d3 = 0;
  double j_d1 = 0, j_d2 = 0, j_d3 = 0;
  double j_adv = 0;

  std::string log_line() const;
};

struct AdversarialLosses {
  double j_d1 = 0, j_d2 = 0, j_d3 = 0, j_adv = 0;
};

/// Segmentation network, the three discriminators, their optimizers and the
/// random streams used for pairing and channel shuffling.
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, int in_channels);

  const TrainConfig& config() const noexcept { return cfg_; }
  SegmentationNet& seg() noexcept { return seg_; }
  Discriminator& disc(int which);
  /// 0 = segmentation network, 1..3 = discriminators.
  AdamState& optimizer(int which);
  ParamStore& store(int which);
  Rng& pairing_rng() noexcept { return pairing_; }
  Rng& channel_rng() noexcept { return channel_; }

  /// Cross entropy update of the segmentation network.
  double phase1_seg_step(const Batch& batch);
  /// D1 learns which slot holds the penumbra ground truth.
  double phase2_d1_step(const Batch& batch);
  /// D2, same for the core.
  double phase3_d2_step(const Batch& batch);
  /// D3 learns where the penumbra channel went after a random shuffle.
  double phase4_d3_step(const Batch& batch);
  /// Segmentation update on J_Adv = -(alpha J_D1 + beta J_D2 + gamma J_D3)
  /// with the discriminators held fixed.
  AdversarialLosses phase5_adv_step(const Batch& batch);

  /// Phase 1, then Phases 2-5 when adversarial is set. Equivalent to calling
  /// the phase functions in order; the segmentation forward of Phases 2-5 is
  /// shared since the network does not change between them.
  PhaseReport train_batch(const Batch& batch, int epoch, int index, bool adversarial);

  void save_state(Archive& archive) const;
  void load_state(const Archive& archive);

 private:
  struct SegPass;
  std::unique_ptr<SegPass> seg_pass(const Batch& batch, bool trainable);
  double pair_step(int which, const Batch& batch, const Tensor& probs);
  double channel_step(const Tensor& probs);
  AdversarialLosses adversarial_step(const Batch& batch, SegPass& pass);

  TrainConfig cfg_;
  SegmentationNet seg_;
  std::array<std::unique_ptr<Discriminator>, 3> discs_;
  std::array<AdamState, 4> opts_;
  Rng pairing_;
  Rng channel_;
};

/// Subject-level confusion counts of net (eval mode) over a slice dataset,
/// on unpadded slices. The sink, when set, sees every unpadded slice.
using SliceSink = std::function<void(const SliceSample& sample, const LabelMap& pred, const LabelMap& gt)>;
std::vector<SubjectMetrics> evaluate_slices(SegmentationNet& net, const SliceDataset& data, int batch_size,
                                            const SliceSink& sink = {});

struct ValidationScore {
  double dice_pen = 0;
  double dice_core = 0;
  double metric() const { return 0.5 * (dice_pen + dice_core); }
};
ValidationScore validation_score(const std::vector<SubjectMetrics>& subjects);

struct FitData {
  SliceDataset train;
  SliceDataset val;
  WhiteningStats stats;
};

FitData prepare_fold(const Manifest& manifest, const FoldSplit& split);

struct FitOptions {
  std::filesystem::path out_dir;
  int fold = 0;
  bool resume = true;  // continue from out_dir/last.ckpt when present
  std::function<void(const std::string&)> progress;
};

struct FitResult {
  int epochs_run = 0;  // epochs executed by this call
  int best_epoch = -1;
  double best_metric = 0;
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
};

/// Trains on data.train, validates every epoch, keeps best.ckpt (highest
/// mean validation Dice) and last.ckpt, and writes train.log.
FitResult fit(const RunConfig& config, const FitData& data, const FitOptions& options);

/// Metadata stored next to the model state in a training checkpoint.
struct CheckpointInfo {
  RunConfig config;
  int in_channels = 3;
  int fold = 0;
  int epoch = -1;  // last completed epoch
  ValidationScore score;
  double best_metric = 0;
  int best_epoch = -1;
  WhiteningStats stats;
};

void write_checkpoint_info(Archive& archive, const CheckpointInfo& info);
CheckpointInfo read_checkpoint_info(const Archive& archive);

/// Segmentation network restored from a training checkpoint.
SegmentationNet load_segmentation(const Archive& archive, const CheckpointInfo& info);

}  // namespace strokeseg
