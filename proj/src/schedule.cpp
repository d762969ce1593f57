#include "cpsgd/optimizers.hpp"

#include <cmath>

namespace cpsgd {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require_positive(double value, const char* what) {
  if (!(value > 0.0) || !std::isfinite(value))
    throw Error(Errc::InvalidSchedule, std::string(what) + " must be positive and finite");
}

}  // namespace

Schedule::Schedule(Rule rule) : rule_(rule) {
  std::visit(Overloaded{
                 [](const Constant& c) {
                   require_positive(c.eta, "eta");
                   require_positive(c.gamma, "gamma");
                   require_positive(c.omega, "omega");
                   require_positive(c.alpha_x, "alpha_x");
                 },
                 [](const Coupled& c) {
                   require_positive(c.beta1, "beta1");
                   require_positive(c.beta2, "beta2");
                   require_positive(c.omega, "omega");
                   require_positive(c.alpha_x, "alpha_x");
                 },
                 [](const Horizon& c) {
                   require_positive(c.beta1, "beta1");
                   require_positive(c.beta2, "beta2");
                   require_positive(c.alpha_x, "alpha_x");
                   if (c.horizon < 1) throw Error(Errc::InvalidSchedule, "horizon T must be >= 1");
                   if (c.agents < 1) throw Error(Errc::InvalidSchedule, "agent count must be >= 1");
                 },
                 [](const TimeVarying& c) {
                   // Rates must be positive for omega_k to be non-decreasing.
                   require_positive(c.gamma_rate, "gamma_rate");
                   require_positive(c.omega_rate, "omega_rate");
                   require_positive(c.eta_scale, "eta_scale");
                   require_positive(c.alpha_x, "alpha_x");
                 },
             },
             rule_);
}

Schedule Schedule::constant(double eta, double gamma, double omega, double alpha_x) {
  return Schedule(Constant{eta, gamma, omega, alpha_x});
}

Schedule Schedule::theorem1(double beta1, double beta2, double omega, double alpha_x) {
  return Schedule(Coupled{beta1, beta2, omega, alpha_x});
}

Schedule Schedule::corollary1(double beta1, double beta2, long long horizon, int agents, double alpha_x) {
  return Schedule(Horizon{beta1, beta2, horizon, agents, alpha_x});
}

Schedule Schedule::table1_timevarying(double alpha_x, double gamma_rate, double omega_rate, double eta_scale) {
  return Schedule(TimeVarying{gamma_rate, omega_rate, eta_scale, alpha_x});
}

StepParams Schedule::at(long long k) const {
  if (k < 0) throw Error(Errc::InvalidSchedule, "round index must be non-negative");
  return std::visit(Overloaded{
                        [](const Constant& c) { return StepParams{c.eta, c.gamma, c.omega, c.alpha_x}; },
                        [](const Coupled& c) {
                          return StepParams{c.beta2 / c.omega, c.beta1 * c.omega, c.omega, c.alpha_x};
                        },
                        [k](const Horizon& c) {
                          if (k >= c.horizon)
                            throw Error(Errc::ScheduleExhausted,
                                        "round " + std::to_string(k) + " beyond horizon " +
                                            std::to_string(c.horizon));
                          const double omega =
                              c.beta2 * std::sqrt(static_cast<double>(c.horizon)) / std::sqrt(c.agents);
                          return StepParams{c.beta2 / omega, c.beta1 * omega, omega, c.alpha_x};
                        },
                        [k](const TimeVarying& c) {
                          const double t = static_cast<double>(k + 1);
                          return StepParams{c.eta_scale / t, c.gamma_rate * t, c.omega_rate * t, c.alpha_x};
                        },
                    },
                    rule_);
}

void Schedule::validate_for(const CompressorSpec& compressor) const {
  const double alpha = at(0).alpha_x;
  if (!(alpha > 0.0 && alpha < 1.0 / compressor.r))
    throw Error(Errc::InvalidSchedule, "alpha_x=" + std::to_string(alpha) + " outside (0, 1/r) with r=" +
                                           std::to_string(compressor.r));
}

std::string Schedule::kind_name() const {
  return std::visit(Overloaded{
                        [](const Constant&) { return std::string("constant"); },
                        [](const Coupled&) { return std::string("theorem1"); },
                        [](const Horizon&) { return std::string("corollary1"); },
                        [](const TimeVarying&) { return std::string("table1_timevarying"); },
                    },
                    rule_);
}

nlohmann::json Schedule::to_json() const {
  return std::visit(
      Overloaded{
          [](const Constant& c) -> nlohmann::json {
            return {{"kind", "constant"}, {"eta", c.eta}, {"gamma", c.gamma}, {"omega", c.omega},
                    {"alpha_x", c.alpha_x}};
          },
          [](const Coupled& c) -> nlohmann::json {
            return {{"kind", "theorem1"}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"omega", c.omega},
                    {"alpha_x", c.alpha_x}};
          },
          [](const Horizon& c) -> nlohmann::json {
            return {{"kind", "corollary1"}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"horizon", c.horizon},
                    {"agents", c.agents}, {"alpha_x", c.alpha_x}};
          },
          [](const TimeVarying& c) -> nlohmann::json {
            return {{"kind", "table1_timevarying"}, {"gamma_rate", c.gamma_rate}, {"omega_rate", c.omega_rate},
                    {"eta_scale", c.eta_scale}, {"alpha_x", c.alpha_x}};
          },
      },
      rule_);
}

StepParams schedule_eval(const Schedule& schedule, long long k) { return schedule.at(k); }

SwarmState SwarmState::initial(Stack x0) {
  SwarmState s;
  s.v = Stack::Zero(x0.rows(), x0.cols());
  s.xc = Stack::Zero(x0.rows(), x0.cols());
  s.x = std::move(x0);
  return s;
}

}  // namespace cpsgd
