#include "strokeseg/config.hpp"

#include <cmath>
#include <functional>
#include <map>

#include "binary_io.hpp"
#include "kv.hpp"

namespace strokeseg {

std::string to_string(Architecture a) { return a == Architecture::kSumNet ? "sumnet" : "segnet"; }

void TrainConfig::validate() const {
  auto check = [](bool ok, const std::string& msg) { require(ok, ErrorKind::kConfig, msg); };
  check(epochs >= 1, "epochs must be >= 1");
  check(lr > 0 && std::isfinite(lr), "lr must be > 0");
  check(alpha >= 0 && beta >= 0 && gamma >= 0, "alpha, beta and gamma must be >= 0");
  check(batch_size >= 1, "batch_size must be >= 1");
  check(warmup_epochs >= 0, "warmup_epochs must be >= 0");
  check(width_multiplier > 0 && width_multiplier <= 4, "width_multiplier must be in (0, 4]");
  check(disc_base_channels >= 1, "disc_base_channels must be >= 1");
  check(bn_epsilon > 0, "bn_epsilon must be > 0");
  check(bn_momentum > 0 && bn_momentum <= 1, "bn_momentum must be in (0, 1]");
  check(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1, "adam betas must be in [0, 1)");
  check(adam_epsilon > 0, "adam_epsilon must be > 0");
}

SegNetConfig TrainConfig::segnet(int in_channels) const {
  SegNetConfig c;
  c.in_channels = in_channels;
  c.num_classes = 3;
  c.width_multiplier = width_multiplier;
  c.skip_concat = architecture == Architecture::kSumNet;
  c.batchnorm = {bn_epsilon, bn_momentum};
  return c;
}

DiscriminatorConfig TrainConfig::discriminator(int which, int in_channels) const {
  require(which >= 1 && which <= 3, ErrorKind::kInvalidArgument, "discriminator index must be 1, 2 or 3");
  DiscriminatorConfig c;
  // D1/D2 see the input sequences plus two mask slots; D3 sees only the
  // shuffled class channels.
  c.in_channels = which == 3 ? 3 : in_channels + 2;
  c.out_units = which == 3 ? 3 : 1;
  c.base_channels = disc_base_channels;
  c.batchnorm = {bn_epsilon, bn_momentum};
  return c;
}

AdamHyper TrainConfig::adam() const { return {lr, adam_beta1, adam_beta2, adam_epsilon}; }

namespace {

double parse_real(const std::string& v, const std::string& key) {
  const auto slash = v.find('/');
  if (slash != std::string::npos) {
    const double num = kv::to_number<double>(kv::trim(v.substr(0, slash)), ErrorKind::kConfig, key);
    const double den = kv::to_number<double>(kv::trim(v.substr(slash + 1)), ErrorKind::kConfig, key);
    require(den != 0, ErrorKind::kConfig, key + ": zero denominator");
    return num / den;
  }
  return kv::to_number<double>(v, ErrorKind::kConfig, key);
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail(ErrorKind::kConfig, key + ": expected true or false, got '" + v + "'");
}

std::string fmt(bool b) { return b ? "true" : "false"; }

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  RunConfig c;
  TrainConfig& t = c.train;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  auto integer = [](int& dst) {
    return Setter([&dst](const std::string& v, const std::string& k) {
      dst = kv::to_number<int>(v, ErrorKind::kConfig, k);
    });
  };
  auto real_ = [](double& dst) {
    return Setter([&dst](const std::string& v, const std::string& k) { dst = parse_real(v, k); });
  };
  const std::map<std::string, Setter> setters = {
      {"name", [&](const std::string& v, const std::string&) { c.name = v; }},
      {"epochs", integer(t.epochs)},
      {"lr", real_(t.lr)},
      {"alpha", real_(t.alpha)},
      {"beta", real_(t.beta)},
      {"gamma", real_(t.gamma)},
      {"batch_size", integer(t.batch_size)},
      {"seed", [&](const std::string& v, const std::string& k) {
         t.seed = kv::to_number<std::uint64_t>(v, ErrorKind::kConfig, k);
       }},
      {"warmup_epochs", integer(t.warmup_epochs)},
      {"adversarial", [&](const std::string& v, const std::string& k) { t.adversarial = parse_bool(v, k); }},
      {"architecture", [&](const std::string& v, const std::string& k) {
         if (v == "sumnet") {
           t.architecture = Architecture::kSumNet;
         } else if (v == "segnet") {
           t.architecture = Architecture::kSegNet;
         } else {
           fail(ErrorKind::kConfig, k + ": expected sumnet or segnet, got '" + v + "'");
         }
       }},
      {"width_multiplier", real_(t.width_multiplier)},
      {"disc_base_channels", integer(t.disc_base_channels)},
      {"bn_epsilon", real_(t.bn_epsilon)},
      {"bn_momentum", real_(t.bn_momentum)},
      {"adam_beta1", real_(t.adam_beta1)},
      {"adam_beta2", real_(t.adam_beta2)},
      {"adam_epsilon", real_(t.adam_epsilon)},
      {"proportional_folds",
       [&](const std::string& v, const std::string& k) { c.proportional_folds = parse_bool(v, k); }},
      {"encoder_init", [&](const std::string& v, const std::string&) { c.encoder_init = v; }},
  };
  for (const auto& p : kv::parse(text, ErrorKind::kConfig, "config")) {
    const auto it = setters.find(p.key);
    require(it != setters.end(), ErrorKind::kConfig,
            "config:" + std::to_string(p.line) + ": unknown key '" + p.key + "'");
    it->second(p.value, "config:" + std::to_string(p.line) + ": " + p.key);
  }
  require(!c.name.empty() && c.name.find_first_of(",|") == std::string::npos, ErrorKind::kConfig,
          "config: name must be non-empty and free of ',' and '|'");
  t.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::string text;
  try {
    text = bin::read_text(path);
  } catch (const Error& e) {
    fail(ErrorKind::kConfig, e.what());
  }
  return parse_run_config(text);
}

std::string serialize_run_config(const RunConfig& c) {
  const TrainConfig& t = c.train;
  std::string out;
  auto line = [&](const std::string& k, const std::string& v) { out += k + "=" + v + "\n"; };
  line("name", c.name);
  line("epochs", std::to_string(t.epochs));
  line("lr", kv::format_double(t.lr));
  line("alpha", kv::format_double(t.alpha));
  line("beta", kv::format_double(t.beta));
  line("gamma", kv::format_double(t.gamma));
  line("batch_size", std::to_string(t.batch_size));
  line("seed", std::to_string(t.seed));
  line("warmup_epochs", std::to_string(t.warmup_epochs));
  line("adversarial", fmt(t.adversarial));
  line("architecture", to_string(t.architecture));
  line("width_multiplier", kv::format_double(t.width_multiplier));
  line("disc_base_channels", std::to_string(t.disc_base_channels));
  line("bn_epsilon", kv::format_double(t.bn_epsilon));
  line("bn_momentum", kv::format_double(t.bn_momentum));
  line("adam_beta1", kv::format_double(t.adam_beta1));
  line("adam_beta2", kv::format_double(t.adam_beta2));
  line("adam_epsilon", kv::format_double(t.adam_epsilon));
  line("proportional_folds", fmt(c.proportional_folds));
  line("encoder_init", c.encoder_init);
  return out;
}

}  // namespace strokeseg
