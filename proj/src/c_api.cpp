#include "strokeseg/strokeseg.h"

#include <cstring>
#include <new>
#include <string>

#include "strokeseg/pipeline.hpp"

struct sseg_config {
  strokeseg::RunConfig value;
};

struct sseg_checkpoint {
  strokeseg::CheckpointInfo info;
};

namespace {

thread_local std::string g_last_error;

sseg_status status_of(strokeseg::ErrorKind kind) {
  using strokeseg::ErrorKind;
  switch (kind) {
    case ErrorKind::kShape: return SSEG_ERR_SHAPE;
    case ErrorKind::kInvalidArgument: return SSEG_ERR_INVALID_ARGUMENT;
    case ErrorKind::kConfig: return SSEG_ERR_CONFIG;
    case ErrorKind::kFormat: return SSEG_ERR_FORMAT;
    case ErrorKind::kIo: return SSEG_ERR_IO;
    case ErrorKind::kNumeric: return SSEG_ERR_NUMERIC;
    case ErrorKind::kIncompatible: return SSEG_ERR_INCOMPATIBLE;
  }
  return SSEG_ERR_INTERNAL;
}

template <typename F>
sseg_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return SSEG_OK;
  } catch (const strokeseg::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return SSEG_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SSEG_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  strokeseg::require(p != nullptr, strokeseg::ErrorKind::kInvalidArgument, std::string(what) + " is NULL");
}

strokeseg::Progress wrap(sseg_progress_fn fn, void* user) {
  if (fn == nullptr) return {};
  return [fn, user](const std::string& msg) { fn(msg.c_str(), user); };
}

}  // namespace

extern "C" {

const char* sseg_version(void) { return "1.0.0"; }

const char* sseg_status_name(sseg_status status) {
  switch (status) {
    case SSEG_OK: return "ok";
    case SSEG_ERR_INVALID_ARGUMENT: return "invalid argument";
    case SSEG_ERR_CONFIG: return "configuration error";
    case SSEG_ERR_SHAPE: return "shape error";
    case SSEG_ERR_FORMAT: return "format error";
    case SSEG_ERR_IO: return "i/o error";
    case SSEG_ERR_NUMERIC: return "numeric error";
    case SSEG_ERR_INCOMPATIBLE: return "incompatible";
    case SSEG_ERR_INTERNAL: return "internal error";
  }
  return "unknown";
}

const char* sseg_last_error(void) { return g_last_error.c_str(); }

void sseg_string_free(char* text) { delete[] text; }

sseg_status sseg_config_default(sseg_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new sseg_config{};
  });
}

sseg_status sseg_config_parse(const char* text, sseg_config** out) {
  return guarded([&] {
    need(text, "text");
    need(out, "out");
    *out = new sseg_config{strokeseg::parse_run_config(text)};
  });
}

sseg_status sseg_config_load(const char* path, sseg_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new sseg_config{strokeseg::load_run_config(path)};
  });
}

sseg_status sseg_config_set(sseg_config* config, const char* key, const char* value) {
  return guarded([&] {
    need(config, "config");
    need(key, "key");
    need(value, "value");
    strokeseg::require(std::strchr(value, '\n') == nullptr && std::strchr(key, '\n') == nullptr,
                       strokeseg::ErrorKind::kConfig, "config: keys and values may not contain newlines");
    config->value = strokeseg::parse_run_config(strokeseg::serialize_run_config(config->value) + key + "=" +
                                                value + "\n");
  });
}

sseg_status sseg_config_serialize(const sseg_config* config, char** out_text) {
  return guarded([&] {
    need(config, "config");
    need(out_text, "out_text");
    const std::string s = strokeseg::serialize_run_config(config->value);
    char* buf = new char[s.size() + 1];
    std::memcpy(buf, s.c_str(), s.size() + 1);
    *out_text = buf;
  });
}

void sseg_config_free(sseg_config* config) { delete config; }

void sseg_phantom_spec_default(sseg_phantom_spec* spec) {
  if (spec == nullptr) return;
  const strokeseg::PhantomSpec d;
  *spec = {d.subjects, d.slices, d.size, d.seed, d.noise};
}

sseg_status sseg_phantom_generate(const sseg_phantom_spec* spec, const char* out_dir) {
  return guarded([&] {
    need(spec, "spec");
    need(out_dir, "out_dir");
    strokeseg::PhantomSpec s;
    s.subjects = spec->subjects;
    s.slices = spec->slices;
    s.size = spec->size;
    s.seed = spec->seed;
    s.noise = spec->noise;
    strokeseg::generate_phantoms(s, out_dir);
  });
}

sseg_status sseg_train(const sseg_config* config, const char* manifest, int fold, const char* out_dir,
                       sseg_progress_fn progress, void* user) {
  return guarded([&] {
    need(config, "config");
    need(manifest, "manifest");
    need(out_dir, "out_dir");
    strokeseg::train_fold(config->value, manifest, fold, out_dir, wrap(progress, user));
  });
}

sseg_status sseg_evaluate(const char* checkpoint, const char* manifest, int fold, const char* split,
                          const char* out_dir, int write_overlays) {
  return guarded([&] {
    need(checkpoint, "checkpoint");
    need(manifest, "manifest");
    need(split, "split");
    need(out_dir, "out_dir");
    strokeseg::evaluate_checkpoint(checkpoint, manifest, fold, split, out_dir, write_overlays != 0);
  });
}

sseg_status sseg_crossval(const sseg_config* config, const char* manifest, const char* out_dir,
                          sseg_progress_fn progress, void* user) {
  return guarded([&] {
    need(config, "config");
    need(manifest, "manifest");
    need(out_dir, "out_dir");
    strokeseg::crossval(config->value, manifest, out_dir, wrap(progress, user));
  });
}

sseg_status sseg_report_merge(const char* const* csv_paths, size_t count, const char* markdown_out,
                              const char* csv_out) {
  return guarded([&] {
    need(csv_paths, "csv_paths");
    std::vector<std::filesystem::path> paths;
    for (size_t i = 0; i < count; ++i) {
      need(csv_paths[i], "csv path");
      paths.emplace_back(csv_paths[i]);
    }
    const auto table = strokeseg::merge_reports(paths);
    if (markdown_out) strokeseg::emit_report(table, strokeseg::ReportFormat::kMarkdown, markdown_out);
    if (csv_out) strokeseg::emit_report(table, strokeseg::ReportFormat::kCsv, csv_out);
  });
}

sseg_status sseg_checkpoint_open(const char* path, sseg_checkpoint** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    const auto archive = strokeseg::Archive::load(path);
    *out = new sseg_checkpoint{strokeseg::read_checkpoint_info(archive)};
  });
}

int sseg_checkpoint_epoch(const sseg_checkpoint* ckpt) { return ckpt ? ckpt->info.epoch : -1; }
int sseg_checkpoint_fold(const sseg_checkpoint* ckpt) { return ckpt ? ckpt->info.fold : -1; }
double sseg_checkpoint_best_metric(const sseg_checkpoint* ckpt) { return ckpt ? ckpt->info.best_metric : 0.0; }

sseg_status sseg_checkpoint_config(const sseg_checkpoint* ckpt, sseg_config** out) {
  return guarded([&] {
    need(ckpt, "checkpoint");
    need(out, "out");
    *out = new sseg_config{ckpt->info.config};
  });
}

void sseg_checkpoint_free(sseg_checkpoint* ckpt) { delete ckpt; }

}  // extern "C"
