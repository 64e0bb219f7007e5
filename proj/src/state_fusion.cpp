#include "rotorsense/state_fusion.hpp"

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <limits>
#include <string>

#include "rotorsense/errors.hpp"

namespace rotorsense {

void check_covariance(Matrix6& sigma) {
  if (!sigma.allFinite()) throw NumericalError("covariance has non-finite entries");
  const Matrix6 sym = 0.5 * (sigma + sigma.transpose());
  const Eigen::SelfAdjointEigenSolver<Matrix6> eig(sym, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-9)
    throw NumericalError("covariance lost positive semidefiniteness (min eigenvalue " +
                         std::to_string(eig.eigenvalues().minCoeff()) + ")");
  sigma = sym;
}

FusedState predict(const FusedState& s, const MotionPrior& prior, double dt, const ThrustModel& model) {
  if (!(dt > 0.0)) throw ConfigError("predict needs dt > 0");
  if (!std::isfinite(dt) || !std::isfinite(prior.process_noise) || prior.process_noise < 0.0)
    throw DataError("non-finite prediction input");
  for (double w : prior.omega_rad_s)
    if (!std::isfinite(w) || w < 0.0) throw DataError("rotor speeds must be finite and nonnegative");

  Eigen::Vector3d a = Eigen::Vector3d::Zero();
  if (!prior.omega_rad_s.empty()) {
    const Vec3 acc = model.acceleration(prior.command, prior.omega_rad_s);
    a = {acc[0], acc[1], acc[2]};
  }
  FusedState out;
  out.t = s.t + static_cast<Timestamp>(std::llround(dt * 1e6));
  out.mu.head<3>() = s.mu.head<3>() + s.mu.tail<3>() * dt + 0.5 * a * dt * dt;
  out.mu.tail<3>() = s.mu.tail<3>() + a * dt;

  Matrix6 f = Matrix6::Identity();
  f.topRightCorner<3, 3>() = Eigen::Matrix3d::Identity() * dt;
  Matrix6 q = Matrix6::Zero();
  const Eigen::Matrix3d i3 = Eigen::Matrix3d::Identity();
  q.topLeftCorner<3, 3>() = i3 * (dt * dt * dt / 3.0);
  q.topRightCorner<3, 3>() = i3 * (dt * dt / 2.0);
  q.bottomLeftCorner<3, 3>() = i3 * (dt * dt / 2.0);
  q.bottomRightCorner<3, 3>() = i3 * dt;
  out.sigma = f * s.sigma * f.transpose() + prior.process_noise * q;
  check_covariance(out.sigma);
  return out;
}

UpdateResult update(const FusedState& s, const Eigen::Vector3d& gps, const Eigen::Matrix3d& r) {
  if (!gps.allFinite() || !r.allFinite()) throw DataError("non-finite GPS input");
  const Eigen::LLT<Eigen::Matrix3d> r_chol(r);
  if (r_chol.info() != Eigen::Success) throw ConfigError("GPS covariance must be positive definite");

  Eigen::Matrix<double, 3, 6> h = Eigen::Matrix<double, 3, 6>::Zero();
  h.leftCols<3>().setIdentity();
  UpdateResult out;
  out.innovation = gps - s.mu.head<3>();
  const Eigen::Matrix3d sm = h * s.sigma * h.transpose() + r;
  const Eigen::LDLT<Eigen::Matrix3d> s_ldlt(sm);
  if (s_ldlt.info() != Eigen::Success || !(s_ldlt.vectorD().minCoeff() > 0.0))
    throw NumericalError("singular innovation covariance");
  const Eigen::Matrix<double, 6, 3> k = s_ldlt.solve(h * s.sigma.transpose()).transpose();
  out.nis = out.innovation.dot(s_ldlt.solve(out.innovation));

  out.state.t = s.t;
  out.state.mu = s.mu + k * out.innovation;
  const Matrix6 ikh = Matrix6::Identity() - k * h;
  out.state.sigma = ikh * s.sigma * ikh.transpose() + k * r * k.transpose();
  check_covariance(out.state.sigma);
  return out;
}

namespace {

enum class InputKind { speed = 0, command = 1, gps = 2 };

struct Input {
  Timestamp t;
  InputKind kind;
  std::size_t index;
};

}  // namespace

FusionResult run_fusion(std::span<const SpeedSample> speeds, std::span<const CommandEvent> commands,
                        std::span<const GpsFix> gps, const ThrustModel& model, const FusionConfig& config) {
  if (!(config.gps_sigma_m > 0.0)) throw ConfigError("GPS sigma must be positive");
  if (!(config.process_noise >= 0.0)) throw ConfigError("process noise must be nonnegative");
  FusionResult out;
  if (gps.empty()) return out;

  // Each stream is consumed in its own arrival order; the merge always takes
  // the earliest head, with priors ahead of GPS on equal times.
  std::vector<Input> inputs;
  inputs.reserve(speeds.size() + commands.size() + gps.size());
  {
    std::size_t i = 0, j = 0, k = 0;
    while (i < speeds.size() || j < commands.size() || k < gps.size()) {
      constexpr Timestamp kNone = std::numeric_limits<Timestamp>::max();
      const Timestamp ts = i < speeds.size() ? speeds[i].t : kNone;
      const Timestamp tc = j < commands.size() ? commands[j].t : kNone;
      const Timestamp tg = k < gps.size() ? gps[k].t : kNone;
      if (i < speeds.size() && ts <= tc && ts <= tg) {
        inputs.push_back({ts, InputKind::speed, i++});
      } else if (j < commands.size() && tc <= tg) {
        inputs.push_back({tc, InputKind::command, j++});
      } else {
        inputs.push_back({tg, InputKind::gps, k++});
      }
    }
  }

  MotionPrior prior;
  prior.process_noise = config.process_noise;
  const Eigen::Matrix3d r_gps = Eigen::Matrix3d::Identity() * (config.gps_sigma_m * config.gps_sigma_m);
  FusedState state;
  bool started = false;
  Timestamp latest = 0;

  for (const Input& in : inputs) {
    if (started && in.t + config.reorder_tolerance_us < latest) {
      ++out.dropped;
      continue;
    }
    if (started && in.t > state.t) {
      MotionPrior p = prior;
      if (!config.use_priors) p.omega_rad_s.clear();
      state = predict(state, p, double(in.t - state.t) * 1e-6, model);
      state.t = in.t;
    }
    latest = std::max(latest, in.t);
    switch (in.kind) {
      case InputKind::speed: {
        prior.omega_rad_s.clear();
        for (double rpm : speeds[in.index].rpm) prior.omega_rad_s.push_back(rpm_to_rad_s(rpm));
        if (!prior.omega_rad_s.empty() && prior.omega_rad_s.size() != model.rotors.size())
          throw DataError("speed sample has " + std::to_string(prior.omega_rad_s.size()) + " rotors, model has " +
                          std::to_string(model.rotors.size()));
        break;
      }
      case InputKind::command:
        prior.command = commands[in.index].command;
        break;
      case InputKind::gps: {
        const GpsFix& fix = gps[in.index];
        if (!started) {
          state.t = fix.t;
          state.mu.setZero();
          state.mu.head<3>() = fix.position;
          state.sigma.setZero();
          state.sigma.topLeftCorner<3, 3>() = r_gps;
          state.sigma.bottomRightCorner<3, 3>() =
              Eigen::Matrix3d::Identity() * (config.initial_velocity_sigma * config.initial_velocity_sigma);
          started = true;
        } else {
          UpdateResult u = update(state, fix.position, r_gps);
          state = u.state;
          out.nis.push_back(u.nis);
        }
        break;
      }
    }
    if (started) out.states.push_back(state);
  }
  return out;
}

std::pair<double, double> nis_bounds(std::size_t n, int dof, double confidence) {
  if (n == 0 || dof < 1 || !(confidence > 0.0 && confidence < 1.0)) throw ConfigError("bad NIS bound arguments");
  const boost::math::chi_squared dist(double(n) * dof);
  const double tail = (1.0 - confidence) / 2.0;
  return {boost::math::quantile(dist, tail), boost::math::quantile(dist, 1.0 - tail)};
}

}  // namespace rotorsense
