#include "jcl/nn/adam.hpp"

#include <cmath>

namespace jcl::nn {

void Adam::set_trainable_prefixes(std::vector<std::string> prefixes) {
  prefixes_ = std::move(prefixes);
}

void Adam::add_lr_scale(const std::string& prefix, double scale) {
  lr_scales_.emplace_back(prefix, scale);
}

bool Adam::trainable(const std::string& name) const {
  if (prefixes_.empty()) return true;
  for (const std::string& p : prefixes_) {
    if (name.rfind(p, 0) == 0) return true;
  }
  return false;
}

double Adam::lr_for(const std::string& name) const {
  double lr = cfg_.lr;
  size_t best = 0;
  for (const auto& [prefix, scale] : lr_scales_) {
    if (name.rfind(prefix, 0) == 0 && prefix.size() >= best) {
      best = prefix.size();
      lr = cfg_.lr * scale;
    }
  }
  return lr;
}

void Adam::step(ParamStore& store) {
  ++t_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& e : store.entries()) {
    if (!trainable(e.name)) continue;
    Moments& mo = moments_[e.name];
    if (mo.m.numel() == 0) {
      mo.m = Tensor(e.value.shape);
      mo.v = Tensor(e.value.shape);
    }
    double lr = lr_for(e.name);
    for (size_t i = 0; i < e.value.numel(); ++i) {
      double g = e.grad.data[i];
      double m = cfg_.beta1 * mo.m.data[i] + (1.0 - cfg_.beta1) * g;
      double v = cfg_.beta2 * mo.v.data[i] + (1.0 - cfg_.beta2) * g * g;
      double update = lr * (m / bc1) / (std::sqrt(v / bc2) + cfg_.eps);
      mo.m.data[i] = round_f32(m);
      mo.v.data[i] = round_f32(v);
      e.value.data[i] = round_f32(e.value.data[i] - update);
    }
  }
}

void Adam::export_state(ParamStore& sink) const {
  // Deterministic order: follow no particular map order; callers iterate
  // their own param order, so emit sorted by name here.
  std::vector<std::string> names;
  names.reserve(moments_.size());
  for (const auto& [name, _] : moments_) names.push_back(name);
  std::sort(names.begin(), names.end());
  for (const std::string& name : names) {
    const Moments& mo = moments_.at(name);
    sink.add("opt.m." + name, mo.m.shape).data = mo.m.data;
    sink.add("opt.v." + name, mo.v.shape).data = mo.v.data;
  }
}

void Adam::import_state(const ParamStore& source) {
  moments_.clear();
  for (const auto& e : source.entries()) {
    if (e.name.rfind("opt.m.", 0) == 0) {
      std::string pname = e.name.substr(6);
      Moments& mo = moments_[pname];
      mo.m = e.value;
    } else if (e.name.rfind("opt.v.", 0) == 0) {
      std::string pname = e.name.substr(6);
      Moments& mo = moments_[pname];
      mo.v = e.value;
    }
  }
}

}  // namespace jcl::nn
