#include <cmath>
#include <cstdio>
#include <numbers>

#include "strokeseg/data_io.hpp"
#include "strokeseg/rng.hpp"

namespace strokeseg {
namespace {

// Ellipsoid whose in-plane radius is modulated by two angular harmonics, so
// lesion outlines are irregular rather than perfectly elliptical.
struct Blob {
  double cz, cy, cx;
  double rz, ry, rx;
  double a2, p2, a3, p3;

  // < 1 inside.
  double level(double z, double y, double x) const {
    const double dy = (y - cy) / ry, dx = (x - cx) / rx, dz = (z - cz) / rz;
    const double theta = std::atan2(dy, dx);
    const double wobble = 1.0 + a2 * std::cos(2 * theta + p2) + a3 * std::cos(3 * theta + p3);
    return std::sqrt(dy * dy + dx * dx + dz * dz) / wobble;
  }
};

Blob random_blob(Rng& rng, double cz, double cy, double cx, double rz, double ry, double rx) {
  return {cz, cy, cx, rz, ry, rx,
          rng.uniform(0.0, 0.12), rng.uniform(0.0, 2 * std::numbers::pi),
          rng.uniform(0.0, 0.08), rng.uniform(0.0, 2 * std::numbers::pi)};
}

struct BiasField {
  double amp, fy, fx, py, px;
  double at(double y, double x) const { return 1.0 + amp * std::sin(fy * y + py) * std::cos(fx * x + px); }
};

}  // namespace

Manifest generate_phantoms(const PhantomSpec& spec, const std::filesystem::path& out_dir) {
  require(spec.subjects > 0, ErrorKind::kInvalidArgument, "phantoms: subject count must be > 0");
  require(spec.slices > 0, ErrorKind::kInvalidArgument, "phantoms: slices per subject must be > 0");
  require(spec.size >= 16, ErrorKind::kInvalidArgument, "phantoms: size must be >= 16");
  require(spec.noise >= 0, ErrorKind::kInvalidArgument, "phantoms: noise must be >= 0");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  require(!ec, ErrorKind::kIo, "phantoms: cannot create " + out_dir.string());

  const int n = spec.size, depth = spec.slices;
  Manifest manifest;
  manifest.provenance = "phantom";
  manifest.sequences = kDefaultSequences;
  manifest.root = out_dir;

  for (int s = 0; s < spec.subjects; ++s) {
    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "sub%03d", s);
    const std::string id = idbuf;
    Rng rng = Rng::stream(spec.seed, "phantom/" + id);

    const double zc = (depth - 1) / 2.0;
    const double by = n / 2.0 + rng.uniform(-0.03, 0.03) * n;
    const double bx = n / 2.0 + rng.uniform(-0.03, 0.03) * n;
    const double bry = rng.uniform(0.38, 0.45) * n;
    const double brx = rng.uniform(0.33, 0.42) * n;

    const double lry = rng.uniform(0.14, 0.22) * n;
    const double lrx = rng.uniform(0.14, 0.22) * n;
    const double lrz = rng.uniform(0.7, 1.1) * depth;
    const double lcz = zc + rng.uniform(-0.2, 0.2) * depth;
    const double lcy = by + rng.uniform(-0.5, 0.5) * (bry - lry);
    const double lcx = bx + rng.uniform(-0.5, 0.5) * (brx - lrx);
    const Blob lesion = random_blob(rng, lcz, lcy, lcx, lrz, lry, lrx);
    const double core_frac = rng.uniform(0.4, 0.6);
    const Blob core = random_blob(rng, lcz + rng.uniform(-0.1, 0.1) * depth,
                                  lcy + rng.uniform(-0.15, 0.15) * lry, lcx + rng.uniform(-0.15, 0.15) * lrx,
                                  core_frac * lrz, core_frac * lry, core_frac * lrx);

    const double gain[3] = {rng.uniform(0.9, 1.1), rng.uniform(0.9, 1.1), rng.uniform(0.9, 1.1)};
    const double contrast[3] = {spec.dwi_contrast, spec.ttp_contrast, spec.tmax_contrast};
    BiasField bias[3];
    for (auto& b : bias)
      b = {0.1, rng.uniform(0.5, 1.5) * std::numbers::pi / n, rng.uniform(0.5, 1.5) * std::numbers::pi / n,
           rng.uniform(0.0, 2 * std::numbers::pi), rng.uniform(0.0, 2 * std::numbers::pi)};

    Volume label;
    label.depth = depth;
    label.height = label.width = n;
    label.data.assign(static_cast<std::size_t>(depth) * n * n, 0.f);
    Volume chans[3];
    for (auto& c : chans) c = label;

    for (int z = 0; z < depth; ++z) {
      const double shrink = 1.0 - 0.15 * std::abs(z - zc) / std::max(1.0, double(depth));
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
          const std::size_t i = (static_cast<std::size_t>(z) * n + y) * n + x;
          const double ey = (y - by) / (bry * shrink), ex = (x - bx) / (brx * shrink);
          const bool brain = ey * ey + ex * ex < 1.0;
          const bool in_lesion = brain && lesion.level(z, y, x) < 1.0;
          const bool in_core = in_lesion && core.level(z, y, x) < 1.0;
          label.data[i] = in_core ? 2.f : (in_lesion ? 1.f : 0.f);
          for (int c = 0; c < 3; ++c) {
            double v = 0.0;
            if (brain) {
              v = gain[c];
              // DWI rises on the core only; perfusion maps on core and penumbra.
              if (c == 0 ? in_core : in_lesion) v += contrast[c];
              v *= bias[c].at(y, x);
            }
            chans[c].data[i] = static_cast<float>(v + spec.noise * rng.normal());
          }
        }
    }

    SubjectRecord rec;
    rec.id = id;
    for (int c = 0; c < 3; ++c) {
      const std::string file = id + "_" + kDefaultSequences[c] + ".ptns";
      write_volume_ptf(out_dir / file, chans[c]);
      rec.sequences[kDefaultSequences[c]] = file;
    }
    rec.label = id + "_label.ptns";
    write_volume_ptf(out_dir / rec.label, label);
    manifest.subjects.push_back(std::move(rec));
  }
  write_manifest(out_dir / "manifest.txt", manifest);
  return manifest;
}

}  // namespace strokeseg
