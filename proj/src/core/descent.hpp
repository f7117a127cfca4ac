#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace boneforge {

// A minimization problem over a manifold-valued state, seen through a
// tangent chart at the current point.
class DescentProblem {
 public:
  virtual ~DescentProblem() = default;
  // Objective at the current point; fills `grad` in the tangent chart.
  virtual double value_and_gradient(Eigen::VectorXd& grad) = 0;
  // Objective after moving by `step`; the trial point is kept for accept().
  virtual double try_step(const Eigen::VectorXd& step) = 0;
  virtual void accept() = 0;
  // Diagonal preconditioner applied to the gradient (ones by default).
  virtual Eigen::VectorXd preconditioner() const;
  virtual Eigen::Index dimension() const = 0;
};

enum class OptimizerKind { GradientDescent, Adam };

struct DescentOptions {
  OptimizerKind method = OptimizerKind::GradientDescent;
  int max_steps = 200;
  double step_size = 1.0;       // initial trial step (GD) or learning rate (Adam)
  double max_step_size = 1e6;
  double armijo = 1e-4;
  double shrink = 0.5;
  double grow = 2.0;
  double min_step_size = 1e-14;
  double value_tol = 0.0;       // stop once the objective is <= value_tol
  // Adam
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Abort when the objective stays above divergence_factor * initial for
  // divergence_patience consecutive steps.
  double divergence_factor = 10.0;
  int divergence_patience = 20;
};

struct DescentRecord {
  int step = 0;
  double value = 0.0;
};

struct DescentResult {
  std::vector<DescentRecord> trace;  // step 0 is the starting point
  std::string stop_reason;
};

// Called after every recorded step; return false to stop early.
using DescentObserver = std::function<bool(const DescentRecord&)>;

// Preconditioned gradient descent with Armijo backtracking (accepted values
// never increase), or plain Adam, which ignores the preconditioner. Throws NumericalError on non-finite values or divergence.
DescentResult minimize(DescentProblem& problem, const DescentOptions& options, const DescentObserver& observer = {});

}  // namespace boneforge
