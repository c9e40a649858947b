#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "qdkt/dataset.hpp"
#include "qdkt/graph.hpp"
#include "qdkt/rng.hpp"

namespace qdkt {

// All trainable weights. Gate blocks are stacked [input; forget; output;
// candidate] so one product covers the four gates; the per-gate views below
// give the conventional layout.
struct ParamSet {
    int K = 0; // embedding size
    int H = 0; // hidden size
    int N = 0; // output size (questions, or joint skills for the baseline)

    Eigen::MatrixXd W_xv; // K x 2N
    Eigen::MatrixXd W_g;  // 4H x K
    Eigen::MatrixXd U_g;  // 4H x H
    Eigen::VectorXd b_g;  // 4H
    Eigen::MatrixXd W_yh; // N x H
    Eigen::VectorXd b_y;  // N

    ParamSet() = default;
    ParamSet(int K_, int H_, int N_);

    auto W_i() { return W_g.middleRows(0 * H, H); }
    auto W_f() { return W_g.middleRows(1 * H, H); }
    auto W_o() { return W_g.middleRows(2 * H, H); }
    auto W_c() { return W_g.middleRows(3 * H, H); }
    auto U_i() { return U_g.middleRows(0 * H, H); }
    auto U_f() { return U_g.middleRows(1 * H, H); }
    auto U_o() { return U_g.middleRows(2 * H, H); }
    auto U_c() { return U_g.middleRows(3 * H, H); }
    auto b_i() { return b_g.segment(0 * H, H); }
    auto b_f() { return b_g.segment(1 * H, H); }
    auto b_o() { return b_g.segment(2 * H, H); }
    auto b_c() { return b_g.segment(3 * H, H); }

    void set_zero();
    // Visit every tensor as a flat span, in a fixed order.
    template <typename Fn>
    void for_each_tensor(Fn&& fn) {
        fn(W_xv.data(), W_xv.size());
        fn(W_g.data(), W_g.size());
        fn(U_g.data(), U_g.size());
        fn(b_g.data(), b_g.size());
        fn(W_yh.data(), W_yh.size());
        fn(b_y.data(), b_y.size());
    }
    template <typename Fn>
    void for_each_tensor(Fn&& fn) const {
        fn(W_xv.data(), W_xv.size());
        fn(W_g.data(), W_g.size());
        fn(U_g.data(), U_g.size());
        fn(b_g.data(), b_g.size());
        fn(W_yh.data(), W_yh.size());
        fn(b_y.data(), b_y.size());
    }
};

struct LstmStepResult {
    Eigen::VectorXd h;
    Eigen::VectorXd c;
    Eigen::VectorXd i, f, o, g; // post-activation gates
};

// One LSTM cell update:
//   i = sig(W_i x + U_i h_prev + b_i)      f, o likewise
//   g = tanh(W_c x + U_c h_prev + b_c)
//   c = f .* c_prev + i .* g
//   h = o .* tanh(c)
LstmStepResult lstm_step(const ParamSet& p, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& h_prev, const Eigen::VectorXd& c_prev);

enum class Mode { kTrain, kEval };

// Per-timestep activations cached for backpropagation. Columns are
// timesteps.
struct ForwardTrace {
    std::vector<int> codes; // interaction code per t
    Eigen::MatrixXd X;      // K x T inputs
    Eigen::MatrixXd I, F, O, G; // H x T gate activations
    Eigen::MatrixXd C;      // H x T cell states
    Eigen::MatrixXd Hs;     // H x T hidden states
    Eigen::MatrixXd Hd;     // H x T hidden states after (inverted) dropout
    Eigen::MatrixXd Y;      // N x T output probabilities
    Eigen::MatrixXd mask;   // H x T dropout keep masks (train mode only)
    bool train_mode = false;
    double dropout_p = 0.0;
    int T() const { return static_cast<int>(codes.size()); }
};

// Runs the recurrence from zero initial state over one sequence. In train
// mode inverted dropout is applied to h_t on the output path only; the
// recurrent path sees the undropped state.
ForwardTrace forward(const ParamSet& p, const LearnerSequence& seq, Mode mode,
                     double dropout_p = 0.0, Rng* rng = nullptr);

struct LossValue {
    double total = 0.0;
    double data = 0.0;    // mean BCE(y_t[q_{t+1}], a_{t+1}) over t in [1, T-1]
    double penalty = 0.0; // mean y_t^T L y_t over the same t (lambda excluded)
};

// BCE probabilities are clamped to [eps, 1-eps] for finiteness.
inline constexpr double kProbClamp = 1e-7;

// total = data + lambda * penalty. L may be null when lambda == 0.
// Throws when the sequence has no prediction target (T < 2).
LossValue loss(const ForwardTrace& trace, const LearnerSequence& seq, double lambda,
               const Laplacian* L);

// Exact reverse-mode gradients of loss() w.r.t. every parameter.
ParamSet backward(const ParamSet& p, const ForwardTrace& trace, const LearnerSequence& seq,
                  double lambda, const Laplacian* L);

// Random (H, K)-shaped weights uniform in +-1/sqrt(fan-in); biases zero;
// W_xv is set separately by the caller (random or pretrained).
ParamSet init_params(int K, int H, int N, uint64_t seed);

} // namespace qdkt
