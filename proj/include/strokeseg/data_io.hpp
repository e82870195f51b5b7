#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "strokeseg/tensor.hpp"

namespace strokeseg {

// ---------------------------------------------------------------------------
// Volumes and file formats

/// Scalar volume stored slice-major: data[(z * height + y) * width + x].
struct Volume {
  int depth = 0;
  int height = 0;
  int width = 0;
  std::array<float, 3> voxel_size{1.f, 1.f, 1.f};  // (x, y, z) spacing
  std::vector<float> data;

  std::size_t slice_size() const noexcept { return static_cast<std::size_t>(height) * width; }
  float at(int z, int y, int x) const { return data[(static_cast<std::size_t>(z) * height + y) * width + x]; }
};

/// Reads an uncompressed single-file NIfTI-1 volume (int16, float32 or
/// float64), honoring byte order and scl_slope/scl_inter.
Volume read_nifti(const std::filesystem::path& path);

/// Array in the portable tensor format: "PTNS", u32 version, u8 dtype (0 =
/// f32), u8 ndim, u32 dims, then the little-endian row-major payload.
struct PtfArray {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
};

void write_ptf(const std::filesystem::path& path, const PtfArray& array);
PtfArray read_ptf(const std::filesystem::path& path);

void write_volume_ptf(const std::filesystem::path& path, const Volume& volume);
/// Reads a 3-D (depth, height, width) or 2-D (height, width) array.
Volume read_volume_ptf(const std::filesystem::path& path);
/// Dispatches on extension: .nii -> NIfTI-1, .ptns -> portable tensor format.
Volume read_volume(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Manifest

inline const std::vector<std::string> kDefaultSequences = {"DWI", "TTP", "Tmax"};

struct SubjectRecord {
  std::string id;
  std::map<std::string, std::filesystem::path> sequences;  // name -> volume path
  std::filesystem::path label;
};

struct Manifest {
  std::string provenance = "phantom";  // "isles" or "phantom"
  std::vector<std::string> sequences = kDefaultSequences;  // channels fed to the network, in order
  std::vector<SubjectRecord> subjects;
  std::filesystem::path root;  // directory relative paths resolve against

  std::vector<std::string> subject_ids() const;
  const SubjectRecord& subject(const std::string& id) const;
  std::filesystem::path resolve(const std::filesystem::path& p) const;
};

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

/// Channel volumes (in manifest sequence order) plus the label volume.
struct SubjectVolumes {
  std::vector<Volume> channels;
  Volume label;
};

SubjectVolumes load_subject(const Manifest& manifest, const std::string& id);

// ---------------------------------------------------------------------------
// Whitening

struct WhiteningStats {
  static constexpr double kStdFloor = 1e-6;
  std::vector<std::string> sequences;
  std::vector<double> mean;
  std::vector<double> stddev;
};

/// Per-sequence mean / population standard deviation pooled over every voxel
/// of the given (training) subjects.
WhiteningStats compute_whitening(const Manifest& manifest, const std::vector<std::string>& train_ids);
/// (x - mean) / std of channel c, in place.
void apply_whitening(std::vector<float>& values, const WhiteningStats& stats, std::size_t channel);

// ---------------------------------------------------------------------------
// Folds

struct FoldSplit {
  int fold = 0;
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

inline constexpr int kNumFolds = 3;
inline constexpr int kTestBlock = 5;
inline constexpr int kValBlock = 5;

/// Seeded shuffle, then rotation: fold f tests on block f and validates on
/// block f + 3 of six equal blocks; everything else trains. Requires 30+
/// subjects unless proportional is set, in which case block sizes shrink to
/// floor(n / 6) (test blocks at least 1).
std::vector<FoldSplit> make_folds(const std::vector<std::string>& subject_ids, std::uint64_t seed,
                                  bool proportional = false);

// ---------------------------------------------------------------------------
// Slices

struct PadRecord {
  int top = 0, bottom = 0, left = 0, right = 0;
  bool operator==(const PadRecord&) const = default;
};

/// Symmetric zero padding that brings (h, w) up to the given target size.
PadRecord pad_for(int h, int w, int target_h, int target_w);
int round_up(int value, int multiple);

/// Pads each (h, w) plane of a (n, c, h, w) buffer.
std::vector<float> pad_planes(const std::vector<float>& src, int planes, int h, int w, const PadRecord& pad);
/// Inverse of pad_planes; h and w are the unpadded size.
std::vector<float> unpad_planes(const std::vector<float>& src, int planes, int h, int w, const PadRecord& pad);

struct SliceSample {
  std::string subject;
  int slice = 0;
  int orig_h = 0;
  int orig_w = 0;
  PadRecord pad;
  std::vector<float> image;     // channels x height x width (padded, whitened)
  std::vector<std::uint8_t> label;  // height x width (padded)
};

struct SliceDataset {
  int channels = 0;
  int height = 0;  // padded size shared by every sample
  int width = 0;
  std::vector<SliceSample> samples;

  /// Stacks the selected samples into a network input and label map.
  std::pair<Tensor, LabelMap> batch(const std::vector<std::size_t>& indices) const;
  /// Sample indices grouped per subject, subjects in first-appearance order.
  std::vector<std::pair<std::string, std::vector<std::size_t>>> by_subject() const;
};

inline constexpr int kSpatialMultiple = 32;

/// Every axial slice of the given subjects, whitened with stats and padded
/// to a common multiple-of-32 size.
SliceDataset extract_slices(const Manifest& manifest, const std::vector<std::string>& subject_ids,
                            const WhiteningStats& stats);

// ---------------------------------------------------------------------------
// Synthetic phantoms

struct PhantomSpec {
  int subjects = 30;
  int slices = 8;
  int size = 96;
  std::uint64_t seed = 0;
  double noise = 0.3;          // Gaussian noise sigma, all channels
  double dwi_contrast = 1.0;   // DWI elevation on core
  double ttp_contrast = 0.8;   // TTP elevation on core + penumbra
  double tmax_contrast = 1.2;  // Tmax elevation on core + penumbra
};

/// Writes one PTNS volume per sequence plus a label volume per subject and a
/// manifest.txt into out_dir, and returns the manifest.
Manifest generate_phantoms(const PhantomSpec& spec, const std::filesystem::path& out_dir);

}  // namespace strokeseg
