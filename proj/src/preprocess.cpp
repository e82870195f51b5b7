#include <algorithm>
#include <cmath>

#include "strokeseg/data_io.hpp"
#include "strokeseg/rng.hpp"

namespace strokeseg {

WhiteningStats compute_whitening(const Manifest& manifest, const std::vector<std::string>& train_ids) {
  require(!train_ids.empty(), ErrorKind::kInvalidArgument, "whitening: empty training set");
  const std::size_t nseq = manifest.sequences.size();
  std::vector<double> sum(nseq, 0.0), sq(nseq, 0.0);
  std::vector<std::size_t> count(nseq, 0);
  std::vector<SubjectVolumes> cache;
  cache.reserve(train_ids.size());
  for (const auto& id : train_ids) cache.push_back(load_subject(manifest, id));
  for (const auto& sv : cache)
    for (std::size_t c = 0; c < nseq; ++c) {
      for (float v : sv.channels[c].data) sum[c] += v;
      count[c] += sv.channels[c].data.size();
    }
  WhiteningStats stats;
  stats.sequences = manifest.sequences;
  stats.mean.resize(nseq);
  for (std::size_t c = 0; c < nseq; ++c) {
    require(count[c] > 0, ErrorKind::kInvalidArgument, "whitening: no voxels for " + manifest.sequences[c]);
    stats.mean[c] = sum[c] / static_cast<double>(count[c]);
  }
  for (const auto& sv : cache)
    for (std::size_t c = 0; c < nseq; ++c)
      for (float v : sv.channels[c].data) {
        const double d = v - stats.mean[c];
        sq[c] += d * d;
      }
  stats.stddev.resize(nseq);
  for (std::size_t c = 0; c < nseq; ++c)
    stats.stddev[c] = std::max(WhiteningStats::kStdFloor, std::sqrt(sq[c] / static_cast<double>(count[c])));
  return stats;
}

void apply_whitening(std::vector<float>& values, const WhiteningStats& stats, std::size_t channel) {
  require(channel < stats.mean.size(), ErrorKind::kInvalidArgument, "whitening: channel out of range");
  const double m = stats.mean[channel];
  const double inv = 1.0 / std::max(WhiteningStats::kStdFloor, stats.stddev[channel]);
  for (float& v : values) v = static_cast<float>((v - m) * inv);
}

std::vector<FoldSplit> make_folds(const std::vector<std::string>& subject_ids, std::uint64_t seed,
                                  bool proportional) {
  const int n = static_cast<int>(subject_ids.size());
  {
    std::vector<std::string> sorted = subject_ids;
    std::sort(sorted.begin(), sorted.end());
    require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(), ErrorKind::kInvalidArgument,
            "folds: duplicate subject ids");
  }
  int test_block = kTestBlock, val_block = kValBlock;
  if (proportional) {
    require(n >= kNumFolds, ErrorKind::kInvalidArgument,
            "folds: need at least 3 subjects, got " + std::to_string(n));
    val_block = n / (2 * kNumFolds);
    test_block = std::max(1, val_block);
    require(n - test_block - val_block >= 1, ErrorKind::kInvalidArgument, "folds: no training subjects left");
  } else {
    require(n >= kNumFolds * (kTestBlock + kValBlock), ErrorKind::kInvalidArgument,
            "folds: the 20/5/5 protocol needs at least 30 subjects, got " + std::to_string(n) +
                " (enable proportional folds for smaller sets)");
  }

  std::vector<std::string> order = subject_ids;
  Rng rng = Rng::stream(seed, "folds");
  rng.shuffle(order);

  std::vector<FoldSplit> folds;
  const int val_start = kNumFolds * test_block;
  for (int f = 0; f < kNumFolds; ++f) {
    FoldSplit split;
    split.fold = f;
    const int t0 = f * test_block, t1 = t0 + test_block;
    const int v0 = val_start + f * val_block, v1 = v0 + val_block;
    for (int i = 0; i < n; ++i) {
      if (i >= t0 && i < t1) {
        split.test.push_back(order[i]);
      } else if (i >= v0 && i < v1) {
        split.val.push_back(order[i]);
      } else {
        split.train.push_back(order[i]);
      }
    }
    folds.push_back(std::move(split));
  }
  return folds;
}

int round_up(int value, int multiple) { return (value + multiple - 1) / multiple * multiple; }

PadRecord pad_for(int h, int w, int target_h, int target_w) {
  require(target_h >= h && target_w >= w, ErrorKind::kShape, "pad: target smaller than input");
  PadRecord p;
  p.top = (target_h - h) / 2;
  p.bottom = target_h - h - p.top;
  p.left = (target_w - w) / 2;
  p.right = target_w - w - p.left;
  return p;
}

std::vector<float> pad_planes(const std::vector<float>& src, int planes, int h, int w, const PadRecord& pad) {
  require(src.size() == static_cast<std::size_t>(planes) * h * w, ErrorKind::kShape, "pad: size mismatch");
  const int ph = h + pad.top + pad.bottom, pw = w + pad.left + pad.right;
  std::vector<float> out(static_cast<std::size_t>(planes) * ph * pw, 0.f);
  for (int p = 0; p < planes; ++p)
    for (int y = 0; y < h; ++y)
      std::copy_n(src.data() + (static_cast<std::size_t>(p) * h + y) * w, w,
                  out.data() + (static_cast<std::size_t>(p) * ph + y + pad.top) * pw + pad.left);
  return out;
}

std::vector<float> unpad_planes(const std::vector<float>& src, int planes, int h, int w, const PadRecord& pad) {
  const int ph = h + pad.top + pad.bottom, pw = w + pad.left + pad.right;
  require(src.size() == static_cast<std::size_t>(planes) * ph * pw, ErrorKind::kShape, "unpad: size mismatch");
  std::vector<float> out(static_cast<std::size_t>(planes) * h * w);
  for (int p = 0; p < planes; ++p)
    for (int y = 0; y < h; ++y)
      std::copy_n(src.data() + (static_cast<std::size_t>(p) * ph + y + pad.top) * pw + pad.left, w,
                  out.data() + (static_cast<std::size_t>(p) * h + y) * w);
  return out;
}

SliceDataset extract_slices(const Manifest& manifest, const std::vector<std::string>& subject_ids,
                            const WhiteningStats& stats) {
  require(stats.mean.size() == manifest.sequences.size(), ErrorKind::kInvalidArgument,
          "slices: whitening statistics do not match the manifest sequences");
  SliceDataset ds;
  ds.channels = static_cast<int>(manifest.sequences.size());
  std::vector<SubjectVolumes> volumes;
  for (const auto& id : subject_ids) {
    volumes.push_back(load_subject(manifest, id));
    const Volume& lab = volumes.back().label;
    ds.height = std::max(ds.height, round_up(lab.height, kSpatialMultiple));
    ds.width = std::max(ds.width, round_up(lab.width, kSpatialMultiple));
  }
  for (std::size_t s = 0; s < subject_ids.size(); ++s) {
    SubjectVolumes& sv = volumes[s];
    for (std::size_t c = 0; c < sv.channels.size(); ++c) apply_whitening(sv.channels[c].data, stats, c);
    const Volume& lab = sv.label;
    const PadRecord pad = pad_for(lab.height, lab.width, ds.height, ds.width);
    const std::size_t plane = lab.slice_size();
    for (int z = 0; z < lab.depth; ++z) {
      SliceSample sample;
      sample.subject = subject_ids[s];
      sample.slice = z;
      sample.orig_h = lab.height;
      sample.orig_w = lab.width;
      sample.pad = pad;
      std::vector<float> img(sv.channels.size() * plane);
      for (std::size_t c = 0; c < sv.channels.size(); ++c)
        std::copy_n(sv.channels[c].data.data() + z * plane, plane, img.data() + c * plane);
      sample.image = pad_planes(img, ds.channels, lab.height, lab.width, pad);
      std::vector<float> lab_plane(lab.data.begin() + z * plane, lab.data.begin() + (z + 1) * plane);
      const std::vector<float> padded = pad_planes(lab_plane, 1, lab.height, lab.width, pad);
      sample.label.resize(padded.size());
      for (std::size_t i = 0; i < padded.size(); ++i) sample.label[i] = static_cast<std::uint8_t>(padded[i]);
      ds.samples.push_back(std::move(sample));
    }
  }
  return ds;
}

std::pair<Tensor, LabelMap> SliceDataset::batch(const std::vector<std::size_t>& indices) const {
  const int n = static_cast<int>(indices.size());
  require(n > 0, ErrorKind::kInvalidArgument, "batch: no samples selected");
  Tensor x({n, channels, height, width});
  LabelMap y(n, height, width);
  const std::size_t img = static_cast<std::size_t>(channels) * height * width;
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  for (int b = 0; b < n; ++b) {
    const SliceSample& s = samples.at(indices[b]);
    std::copy(s.image.begin(), s.image.end(), x.data() + b * img);
    std::copy(s.label.begin(), s.label.end(), y.labels.begin() + b * plane);
  }
  return {std::move(x), std::move(y)};
}

std::vector<std::pair<std::string, std::vector<std::size_t>>> SliceDataset::by_subject() const {
  std::vector<std::pair<std::string, std::vector<std::size_t>>> groups;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto it = std::find_if(groups.begin(), groups.end(), [&](auto& g) { return g.first == samples[i].subject; });
    if (it == groups.end()) {
      groups.push_back({samples[i].subject, {i}});
    } else {
      it->second.push_back(i);
    }
  }
  return groups;
}

}  // namespace strokeseg
