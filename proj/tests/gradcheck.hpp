#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "pgmgnn/autodiff.hpp"

namespace pgmgnn::testing {

struct GradCheckResult {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::string worst;  // "<param>[<entry>]"
  std::size_t entries = 0;
  std::size_t kinks = 0;  // entries re-checked at a smaller step, see below
};

using LossFn = std::function<ad::Var(ad::Tape&, const ad::ParamStore&)>;

/// Compares tape gradients with central differences on every parameter entry.
/// Relative error is |a - n| / max(|a|, |n|, floor); the floor keeps entries
/// whose true gradient is ~0 from dividing roundoff by roundoff.
///
/// A ReLU pre-activation closer to 0 than h makes the central difference
/// straddle the kink. When an entry exceeds `tol`, it is re-checked with step
/// h / 100; if that agrees it counts as a kink and is scored at the small step.
inline GradCheckResult grad_check(ad::ParamStore& store, const LossFn& loss_fn, double h = 1e-5, double floor = 1e-6,
                                  double tol = 1e-4) {
  store.zero_grad();
  {
    ad::Tape tape;
    const ad::Var loss = loss_fn(tape, store);
    tape.backward(loss);
    tape.accumulate_into(store);
  }
  auto eval = [&] {
    ad::Tape tape;
    return loss_fn(tape, store).value().item();
  };
  GradCheckResult out;
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& p = store.at(i);
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double orig = p.value[k];
      auto central = [&](double step) {
        p.value[k] = orig + step;
        const double up = eval();
        p.value[k] = orig - step;
        const double down = eval();
        p.value[k] = orig;
        return (up - down) / (2 * step);
      };
      const double analytic = p.grad[k];
      auto rel_err = [&](double numeric) {
        return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
      };
      double numeric = central(h);
      double rel = rel_err(numeric);
      if (rel > tol) {
        const double fine = central(h / 100);
        if (rel_err(fine) <= tol) {
          ++out.kinks;
          numeric = fine;
          rel = rel_err(fine);
        }
      }
      const double abs_err = std::abs(analytic - numeric);
      out.max_abs_err = std::max(out.max_abs_err, abs_err);
      if (rel > out.max_rel_err) {
        out.max_rel_err = rel;
        out.worst = p.name + "[" + std::to_string(k) + "]";
      }
      ++out.entries;
    }
  }
  store.zero_grad();
  return out;
}

}  // namespace pgmgnn::testing
