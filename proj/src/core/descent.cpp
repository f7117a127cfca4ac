#include "descent.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"

namespace boneforge {

Eigen::VectorXd DescentProblem::preconditioner() const { return Eigen::VectorXd::Ones(dimension()); }

namespace {

void check_finite(double v, int step) {
  if (!std::isfinite(v)) throw NumericalError("objective became non-finite at step " + std::to_string(step));
}

}  // namespace

DescentResult minimize(DescentProblem& problem, const DescentOptions& options, const DescentObserver& observer) {
  if (!(options.step_size > 0.0)) throw ArgumentError("step_size must be positive");
  if (options.max_steps < 0) throw ArgumentError("max_steps must be nonnegative");

  DescentResult result;
  Eigen::VectorXd grad(problem.dimension());
  double value = problem.value_and_gradient(grad);
  check_finite(value, 0);
  const double initial = value;
  result.trace.push_back({0, value});
  if (observer && !observer(result.trace.back())) {
    result.stop_reason = "stopped by observer";
    return result;
  }
  if (value <= options.value_tol) {
    result.stop_reason = "converged";
    return result;
  }

  const Eigen::VectorXd precond = problem.preconditioner();
  double alpha = options.step_size;
  Eigen::VectorXd m = Eigen::VectorXd::Zero(problem.dimension());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(problem.dimension());
  int above = 0;

  for (int step = 1; step <= options.max_steps; ++step) {
    if (!grad.allFinite()) throw NumericalError("gradient became non-finite at step " + std::to_string(step));
    if (options.method == OptimizerKind::GradientDescent) {
      const Eigen::VectorXd dir = -precond.cwiseProduct(grad);
      const double slope = grad.dot(dir);
      if (!(slope < 0.0)) {
        result.stop_reason = "stationary point";
        break;
      }
      bool accepted = false;
      while (alpha >= options.min_step_size) {
        const double trial = problem.try_step(alpha * dir);
        if (std::isfinite(trial) && trial <= value + options.armijo * alpha * slope) {
          accepted = true;
          break;
        }
        alpha *= options.shrink;
      }
      if (!accepted) {
        result.stop_reason = "line search found no decrease";
        break;
      }
      problem.accept();
      alpha = std::min(alpha * options.grow, options.max_step_size);
    } else {
      m = options.beta1 * m + (1.0 - options.beta1) * grad;
      v = options.beta2 * v + (1.0 - options.beta2) * grad.cwiseProduct(grad);
      const double c1 = 1.0 - std::pow(options.beta1, step);
      const double c2 = 1.0 - std::pow(options.beta2, step);
      const Eigen::VectorXd mhat = m / c1;
      const Eigen::VectorXd vhat = v / c2;
      const Eigen::VectorXd dir = -(mhat.array() / (vhat.array().sqrt() + options.epsilon)).matrix();
      problem.try_step(options.step_size * dir);
      problem.accept();
    }

    value = problem.value_and_gradient(grad);
    check_finite(value, step);
    result.trace.push_back({step, value});
    if (observer && !observer(result.trace.back())) {
      result.stop_reason = "stopped by observer";
      return result;
    }
    above = value > options.divergence_factor * initial ? above + 1 : 0;
    if (above >= options.divergence_patience) {
      throw NumericalError("optimization diverged: objective above " + std::to_string(options.divergence_factor) +
                           "x its initial value for " + std::to_string(above) + " consecutive steps");
    }
    if (value <= options.value_tol) {
      result.stop_reason = "converged";
      return result;
    }
  }
  if (result.stop_reason.empty()) result.stop_reason = "step budget exhausted";
  return result;
}

}  // namespace boneforge
