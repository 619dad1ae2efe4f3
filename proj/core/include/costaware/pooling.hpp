#pragma once

#include "costaware/predictive.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace costaware {

// Per-day, per-model predictive log densities of the realised return.
struct ScorePanel {
    std::vector<std::string> dates;
    std::vector<std::string> models;
    Eigen::MatrixXd log_density;  // T x K

    void validate() const;
};

struct PoolOptions {
    double tol = 1e-8;
    int max_iter = 10000;
};

struct PoolWeights {
    Eigen::VectorXd c;
    double objective = 0.0;
    double kkt_residual = 0.0;
    int iterations = 0;
};

// log(sum_k c_k exp(log_density_k)); components with c_k = 0 are skipped.
double mixture_log_score(const Eigen::VectorXd& c, const Eigen::VectorXd& log_density);

// Sum over the rows of `log_window` of mixture_log_score.
double pool_objective(const Eigen::MatrixXd& log_window, const Eigen::VectorXd& c);

// Maximises the summed mixture log score over rows t - h_c .. t (inclusive)
// on the unit simplex by exponentiated-gradient ascent with Armijo
// backtracking. Corner solutions are returned exactly.
PoolWeights optimal_pool(const ScorePanel& panel, Eigen::Index t, Eigen::Index h_c, const PoolOptions& opt = {});
PoolWeights optimal_pool(const Eigen::MatrixXd& log_window, const PoolOptions& opt = {});

// Draws a component from c, then a row of that component's draws, J times.
PredictiveDraws mixture_predict(std::span<const PredictiveDraws> components, const Eigen::VectorXd& c, Eigen::Index j,
                                std::uint64_t seed);

// "date,model,log_density" rows.
void write_score_panel(const ScorePanel& p, std::ostream& out, const std::string& header_comment = "");
ScorePanel read_score_panel(std::istream& in);

// "date,model,weight" rows, one block per date.
void write_pool_weights(std::span<const std::string> dates, std::span<const std::string> models,
                        std::span<const Eigen::VectorXd> weights, std::ostream& out,
                        const std::string& header_comment = "");

}  // namespace costaware
