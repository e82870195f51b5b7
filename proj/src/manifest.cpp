#include <algorithm>
#include <set>

#include "binary_io.hpp"
#include "kv.hpp"
#include "strokeseg/data_io.hpp"

namespace strokeseg {

// Manifest schema (one key=value per line):
//   format=strokeseg-manifest/1
//   provenance=phantom|isles
//   sequences=DWI,TTP,Tmax            channels fed to the network, in order
//   subject=<id>                      declares a subject (order is preserved)
//   subject.<id>.<SEQUENCE>=<path>    volume per sequence (.ptns or .nii)
//   subject.<id>.label=<path>         label volume with values in {0,1,2}
// Relative paths resolve against the manifest's directory.

namespace {
constexpr std::string_view kFormatTag = "strokeseg-manifest/1";
}

std::vector<std::string> Manifest::subject_ids() const {
  std::vector<std::string> ids;
  for (const auto& s : subjects) ids.push_back(s.id);
  return ids;
}

const SubjectRecord& Manifest::subject(const std::string& id) const {
  for (const auto& s : subjects)
    if (s.id == id) return s;
  fail(ErrorKind::kInvalidArgument, "manifest has no subject '" + id + "'");
}

std::filesystem::path Manifest::resolve(const std::filesystem::path& p) const {
  return p.is_absolute() ? p : root / p;
}

Manifest read_manifest(const std::filesystem::path& path) {
  const std::string name = path.string();
  Manifest m;
  m.root = path.parent_path();
  m.subjects.clear();
  bool have_format = false;
  for (const auto& kvp : kv::parse(bin::read_text(path), ErrorKind::kFormat, name)) {
    const std::string where = name + ":" + std::to_string(kvp.line);
    if (kvp.key == "format") {
      require(kvp.value == kFormatTag, ErrorKind::kFormat, where + ": unsupported manifest format " + kvp.value);
      have_format = true;
    } else if (kvp.key == "provenance") {
      require(kvp.value == "phantom" || kvp.value == "isles", ErrorKind::kFormat,
              where + ": provenance must be 'phantom' or 'isles'");
      m.provenance = kvp.value;
    } else if (kvp.key == "sequences") {
      m.sequences = kv::split(kvp.value, ',');
    } else if (kvp.key == "subject") {
      require(!kvp.value.empty(), ErrorKind::kFormat, where + ": empty subject id");
      for (const auto& s : m.subjects)
        require(s.id != kvp.value, ErrorKind::kFormat, where + ": duplicate subject id " + kvp.value);
      m.subjects.push_back({kvp.value, {}, {}});
    } else if (kvp.key.starts_with("subject.")) {
      const std::string rest = kvp.key.substr(8);
      const auto dot = rest.rfind('.');
      require(dot != std::string::npos, ErrorKind::kFormat, where + ": malformed key " + kvp.key);
      const std::string id = rest.substr(0, dot), field = rest.substr(dot + 1);
      auto it = std::find_if(m.subjects.begin(), m.subjects.end(), [&](auto& s) { return s.id == id; });
      require(it != m.subjects.end(), ErrorKind::kFormat, where + ": subject '" + id + "' not declared");
      if (field == "label") {
        it->label = kvp.value;
      } else {
        it->sequences[field] = kvp.value;
      }
    } else {
      fail(ErrorKind::kFormat, where + ": unknown manifest key '" + kvp.key + "'");
    }
  }
  require(have_format, ErrorKind::kFormat, name + ": missing format line");
  require(!m.sequences.empty(), ErrorKind::kFormat, name + ": empty sequence list");
  for (const auto& s : m.subjects) {
    require(!s.label.empty(), ErrorKind::kFormat, name + ": subject " + s.id + " has no label volume");
    for (const auto& seq : m.sequences)
      require(s.sequences.contains(seq), ErrorKind::kFormat,
              name + ": subject " + s.id + " lacks sequence " + seq);
  }
  return m;
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::string out;
  out += "format=" + std::string(kFormatTag) + "\n";
  out += "provenance=" + m.provenance + "\n";
  out += "sequences=";
  for (std::size_t i = 0; i < m.sequences.size(); ++i) out += (i ? "," : "") + m.sequences[i];
  out += "\n";
  for (const auto& s : m.subjects) {
    out += "subject=" + s.id + "\n";
    for (const auto& [seq, p] : s.sequences) out += "subject." + s.id + "." + seq + "=" + p.generic_string() + "\n";
    out += "subject." + s.id + ".label=" + s.label.generic_string() + "\n";
  }
  bin::write_text(path, out);
}

SubjectVolumes load_subject(const Manifest& manifest, const std::string& id) {
  const SubjectRecord& rec = manifest.subject(id);
  SubjectVolumes sv;
  sv.label = read_volume(manifest.resolve(rec.label));
  for (const auto& seq : manifest.sequences) {
    Volume v = read_volume(manifest.resolve(rec.sequences.at(seq)));
    require(v.depth == sv.label.depth && v.height == sv.label.height && v.width == sv.label.width,
            ErrorKind::kShape,
            "subject " + id + ": sequence " + seq + " dims differ from the label volume");
    sv.channels.push_back(std::move(v));
  }
  for (float l : sv.label.data)
    require(l == 0.f || l == 1.f || l == 2.f, ErrorKind::kFormat,
            "subject " + id + ": label values must be 0, 1 or 2");
  return sv;
}

}  // namespace strokeseg
