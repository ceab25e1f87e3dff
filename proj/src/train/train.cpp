#include "step/train.hpp"

#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>

#include "step/errors.hpp"
#include "step/evaluate.hpp"
#include "step/ops.hpp"
#include "step/parallel.hpp"
#include "step/random.hpp"

namespace step {
namespace {

std::uint64_t parse_uint(std::string_view key, std::string_view value) {
  std::uint64_t out = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("field '" + std::string(key) + "': expected a non-negative integer, got '" +
                      std::string(value) + "'");
  }
  return out;
}

double parse_real(std::string_view key, std::string_view value) {
  try {
    std::size_t used = 0;
    const std::string s(value);
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("field '" + std::string(key) + "': expected a number, got '" +
                      std::string(value) + "'");
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("train config: epochs must be positive");
  if (batch_size == 0) throw ConfigError("train config: batch_size must be positive");
  if (!(learning_rate >= 0.0)) throw ConfigError("train config: learning_rate must be >= 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("train config: weight_decay must be >= 0");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw ConfigError("train config: beta1 and beta2 must lie in (0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("train config: eps must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train config: momentum must lie in [0, 1)");
  if (grad_clip_norm && !(*grad_clip_norm > 0.0)) {
    throw ConfigError("train config: grad_clip_norm must be positive");
  }
  if (eval_every == 0) throw ConfigError("train config: eval_every must be positive");
  if (threads == 0) throw ConfigError("train config: threads must be positive");
}

void apply_train_setting(TrainConfig& cfg, std::string_view key, std::string_view value) {
  if (key == "epochs") {
    cfg.epochs = parse_uint(key, value);
  } else if (key == "batch_size") {
    cfg.batch_size = parse_uint(key, value);
  } else if (key == "learning_rate" || key == "lr") {
    cfg.learning_rate = parse_real(key, value);
  } else if (key == "weight_decay") {
    cfg.weight_decay = parse_real(key, value);
  } else if (key == "optimizer") {
    if (value == "adam") {
      cfg.optimizer = OptimizerKind::Adam;
    } else if (value == "sgd") {
      cfg.optimizer = OptimizerKind::Sgd;
    } else {
      throw ConfigError("invalid optimizer '" + std::string(value) + "'; valid: adam, sgd");
    }
  } else if (key == "beta1") {
    cfg.beta1 = parse_real(key, value);
  } else if (key == "beta2") {
    cfg.beta2 = parse_real(key, value);
  } else if (key == "eps") {
    cfg.eps = parse_real(key, value);
  } else if (key == "momentum") {
    cfg.momentum = parse_real(key, value);
  } else if (key == "schedule") {
    if (value == "constant") {
      cfg.schedule = LrSchedule::Constant;
    } else if (value == "cosine") {
      cfg.schedule = LrSchedule::Cosine;
    } else {
      throw ConfigError("invalid schedule '" + std::string(value) + "'; valid: constant, cosine");
    }
  } else if (key == "warmup_epochs") {
    cfg.warmup_epochs = parse_uint(key, value);
  } else if (key == "seed") {
    cfg.seed = parse_uint(key, value);
  } else if (key == "grad_clip_norm") {
    if (value == "none") {
      cfg.grad_clip_norm.reset();
    } else {
      cfg.grad_clip_norm = parse_real(key, value);
    }
  } else if (key == "eval_every") {
    cfg.eval_every = parse_uint(key, value);
  } else if (key == "threads") {
    cfg.threads = parse_uint(key, value);
  } else {
    throw ConfigError("unknown train field '" + std::string(key) + "'");
  }
}

std::string to_canonical_text(const TrainConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << "epochs=" << cfg.epochs << '\n'
     << "batch_size=" << cfg.batch_size << '\n'
     << "learning_rate=" << cfg.learning_rate << '\n'
     << "weight_decay=" << cfg.weight_decay << '\n'
     << "optimizer=" << (cfg.optimizer == OptimizerKind::Adam ? "adam" : "sgd") << '\n'
     << "beta1=" << cfg.beta1 << '\n'
     << "beta2=" << cfg.beta2 << '\n'
     << "eps=" << cfg.eps << '\n'
     << "momentum=" << cfg.momentum << '\n'
     << "schedule=" << (cfg.schedule == LrSchedule::Cosine ? "cosine" : "constant") << '\n'
     << "warmup_epochs=" << cfg.warmup_epochs << '\n'
     << "seed=" << cfg.seed << '\n'
     << "grad_clip_norm=";
  if (cfg.grad_clip_norm) {
    os << *cfg.grad_clip_norm;
  } else {
    os << "none";
  }
  os << '\n' << "eval_every=" << cfg.eval_every << '\n';
  return os.str();
}

double scheduled_lr(const TrainConfig& cfg, std::size_t step, std::size_t steps_per_epoch) {
  if (cfg.schedule == LrSchedule::Constant) return cfg.learning_rate;
  const std::size_t total = cfg.epochs * steps_per_epoch;
  const std::size_t warmup = std::min(cfg.warmup_epochs * steps_per_epoch, total);
  if (step < warmup) {
    return cfg.learning_rate * static_cast<double>(step + 1) / static_cast<double>(warmup);
  }
  const std::size_t decay_steps = total - warmup;
  if (decay_steps == 0) return cfg.learning_rate;
  const double progress = static_cast<double>(step - warmup) / static_cast<double>(decay_steps);
  return cfg.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

TrainResult train(ProbeModel<float> model, const Dataset& dataset, const TrainConfig& cfg) {
  cfg.validate();
  model.config.validate();
  const auto& manifest = dataset.manifest;
  if (manifest.num_classes() != model.config.num_classes) {
    throw ContractError("train: dataset has " + std::to_string(manifest.num_classes()) +
                        " classes, probe has " + std::to_string(model.config.num_classes));
  }
  const auto train_idx = manifest.indices(Split::Train);
  const auto val_idx = manifest.indices(Split::Val);
  if (train_idx.empty()) throw ContractError("train: the train split is empty");
  for (auto i : train_idx) check_feature_dims(model.config, dataset.features[i]);

  const std::size_t n = train_idx.size();
  const std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  Optimizer<float> optimizer(model, cfg.optimizer,
                             AdamHyper{cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay},
                             cfg.momentum);
  std::vector<ProbeModel<float>> views;
  for (std::size_t i = 0; i < std::min(cfg.batch_size, n); ++i) views.push_back(model.share_for_worker());

  TrainResult result{model.clone(), {}, 0, std::nullopt};
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order = train_idx;
  std::size_t step = 0;
  std::vector<float> losses(views.size());

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_in_place(order, rng);
    double loss_sum = 0.0;
    double lr = 0.0;
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      lr = scheduled_lr(cfg, step, steps_per_epoch);
      const std::size_t begin = b * cfg.batch_size;
      const std::size_t count = std::min(cfg.batch_size, n - begin);
      try {
        parallel_for(count, cfg.threads, [&](std::size_t i) {
          const std::size_t clip = order[begin + i];
          auto& worker = views[i];
          worker.zero_grad();
          Tape<float> tape;
          auto logits = forward(tape, worker, dataset.features[clip]);
          auto loss = ops::cross_entropy(tape, logits, manifest.clips[clip].label);
          losses[i] = loss.item();
          if (!std::isfinite(losses[i])) throw NumericError("non-finite loss");
          tape.backward(loss);
        });
      } catch (const NumericError& e) {
        std::ostringstream os;
        os << "training aborted: " << e.what() << " (epoch " << epoch << ", batch " << b + 1
           << ", lr " << lr << ")";
        throw NumericError(os.str());
      }

      const float inv = 1.0f / static_cast<float>(count);
      for (std::size_t p = 0; p < model.params.size(); ++p) {
        auto g = model.params.tensor(p).mutable_grad();
        std::fill(g.begin(), g.end(), 0.0f);
        for (std::size_t i = 0; i < count; ++i) {
          const auto wg = views[i].params.tensor(p).grad();
          for (std::size_t k = 0; k < g.size(); ++k) g[k] += wg[k];
        }
        for (auto& v : g) v *= inv;
      }
      if (cfg.grad_clip_norm) clip_grad_norm(model, *cfg.grad_clip_norm);
      optimizer.step(model, lr);
      ++step;
      for (std::size_t i = 0; i < count; ++i) loss_sum += losses[i];
    }

    EpochRecord record{epoch, loss_sum / static_cast<double>(n), std::nullopt, lr};
    if (!val_idx.empty() && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs)) {
      const auto preds = predict(model, dataset, val_idx, cfg.threads);
      std::size_t correct = 0;
      for (std::size_t i = 0; i < val_idx.size(); ++i) {
        if (preds[i] == manifest.clips[val_idx[i]].label) ++correct;
      }
      const double acc = static_cast<double>(correct) / static_cast<double>(val_idx.size());
      record.val_acc = acc;
      if (!result.best_val_acc || acc > *result.best_val_acc) {
        result.best_val_acc = acc;
        result.best_epoch = epoch;
        result.model = model.clone();
      }
    }
    result.history.push_back(record);
  }
  if (val_idx.empty()) {
    result.model = model.clone();
    result.best_epoch = cfg.epochs;
  }
  result.model.zero_grad();
  return result;
}

}  // namespace step
