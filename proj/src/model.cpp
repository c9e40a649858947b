#include "qdkt/model.hpp"

#include <cmath>
#include <stdexcept>

namespace qdkt {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

template <typename Derived>
auto sigmoid_of(const Eigen::MatrixBase<Derived>& m) {
    return m.unaryExpr([](double v) { return sigmoid(v); });
}

} // namespace

ParamSet::ParamSet(int K_, int H_, int N_) : K(K_), H(H_), N(N_) {
    W_xv = Eigen::MatrixXd::Zero(K, 2 * N);
    W_g = Eigen::MatrixXd::Zero(4 * H, K);
    U_g = Eigen::MatrixXd::Zero(4 * H, H);
    b_g = Eigen::VectorXd::Zero(4 * H);
    W_yh = Eigen::MatrixXd::Zero(N, H);
    b_y = Eigen::VectorXd::Zero(N);
}

void ParamSet::set_zero() {
    for_each_tensor([](double* d, Eigen::Index n) { std::fill(d, d + n, 0.0); });
}

ParamSet init_params(int K, int H, int N, uint64_t seed) {
    if (K <= 0 || H <= 0 || N <= 0) throw std::invalid_argument("init_params: bad dimensions");
    ParamSet p(K, H, N);
    Rng rng(mix_seed({seed, 0x77656967687473ULL})); // "weights"
    const double wk = 1.0 / std::sqrt(static_cast<double>(K));
    const double wh = 1.0 / std::sqrt(static_cast<double>(H));
    for (Eigen::Index idx = 0; idx < p.W_g.size(); ++idx)
        p.W_g.data()[idx] = rng.uniform(-wk, wk);
    for (Eigen::Index idx = 0; idx < p.U_g.size(); ++idx)
        p.U_g.data()[idx] = rng.uniform(-wh, wh);
    for (Eigen::Index idx = 0; idx < p.W_yh.size(); ++idx)
        p.W_yh.data()[idx] = rng.uniform(-wh, wh);
    // Biases stay zero; W_xv is installed by the caller.
    return p;
}

LstmStepResult lstm_step(const ParamSet& p, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& h_prev, const Eigen::VectorXd& c_prev) {
    if (x.size() != p.K || h_prev.size() != p.H || c_prev.size() != p.H)
        throw std::invalid_argument("lstm_step: shape mismatch");
    const Eigen::VectorXd pre = p.W_g * x + p.U_g * h_prev + p.b_g;
    LstmStepResult r;
    r.i = sigmoid_of(pre.segment(0 * p.H, p.H));
    r.f = sigmoid_of(pre.segment(1 * p.H, p.H));
    r.o = sigmoid_of(pre.segment(2 * p.H, p.H));
    r.g = pre.segment(3 * p.H, p.H).array().tanh();
    r.c = r.f.cwiseProduct(c_prev) + r.i.cwiseProduct(r.g);
    r.h = r.o.cwiseProduct(r.c.array().tanh().matrix());
    return r;
}

ForwardTrace forward(const ParamSet& p, const LearnerSequence& seq, Mode mode, double dropout_p,
                     Rng* rng) {
    const int T = static_cast<int>(seq.events.size());
    const int H = p.H, K = p.K, N = p.N;
    if (!(dropout_p >= 0.0 && dropout_p < 1.0))
        throw std::invalid_argument("forward: dropout_p must be in [0,1)");

    ForwardTrace tr;
    tr.train_mode = (mode == Mode::kTrain);
    tr.dropout_p = dropout_p;
    tr.codes.resize(T);
    tr.X.resize(K, T);
    for (int t = 0; t < T; ++t) {
        tr.codes[t] = encode_interaction(seq.events[t].question, seq.events[t].assessment, N);
        tr.X.col(t) = p.W_xv.col(tr.codes[t]);
    }

    tr.I.resize(H, T);
    tr.F.resize(H, T);
    tr.O.resize(H, T);
    tr.G.resize(H, T);
    tr.C.resize(H, T);
    tr.Hs.resize(H, T);

    // Input contributions for all steps at once; the recurrent term is added
    // per step.
    Eigen::MatrixXd gate_in = (p.W_g * tr.X).colwise() + p.b_g;
    Eigen::VectorXd h_prev = Eigen::VectorXd::Zero(H);
    Eigen::VectorXd c_prev = Eigen::VectorXd::Zero(H);
    Eigen::VectorXd pre(4 * H);
    for (int t = 0; t < T; ++t) {
        pre = gate_in.col(t) + p.U_g * h_prev;
        tr.I.col(t) = sigmoid_of(pre.segment(0 * H, H));
        tr.F.col(t) = sigmoid_of(pre.segment(1 * H, H));
        tr.O.col(t) = sigmoid_of(pre.segment(2 * H, H));
        tr.G.col(t) = pre.segment(3 * H, H).array().tanh();
        tr.C.col(t) = tr.F.col(t).cwiseProduct(c_prev) + tr.I.col(t).cwiseProduct(tr.G.col(t));
        tr.Hs.col(t) = tr.O.col(t).cwiseProduct(tr.C.col(t).array().tanh().matrix());
        h_prev = tr.Hs.col(t);
        c_prev = tr.C.col(t);
    }

    const bool dropping = tr.train_mode && dropout_p > 0.0;
    if (dropping) {
        if (!rng) throw std::invalid_argument("forward: train-mode dropout needs an rng");
        tr.mask.resize(H, T);
        for (int t = 0; t < T; ++t)
            for (int d = 0; d < H; ++d) tr.mask(d, t) = rng->bernoulli(1.0 - dropout_p) ? 1.0 : 0.0;
        tr.Hd = tr.Hs.cwiseProduct(tr.mask) / (1.0 - dropout_p);
    } else {
        tr.Hd = tr.Hs;
    }

    Eigen::MatrixXd y_pre = (p.W_yh * tr.Hd).colwise() + p.b_y;
    tr.Y = sigmoid_of(y_pre);
    return tr;
}

LossValue loss(const ForwardTrace& trace, const LearnerSequence& seq, double lambda,
               const Laplacian* L) {
    const int T = trace.T();
    if (T < 2) throw std::runtime_error("loss: sequence has no prediction target (T < 2)");
    if (static_cast<int>(seq.events.size()) != T)
        throw std::invalid_argument("loss: trace/sequence length mismatch");
    if (lambda != 0.0 && (!L || L->n != trace.Y.rows()))
        throw std::invalid_argument("loss: Laplacian dimension mismatch");

    const int steps = T - 1;
    double data = 0.0, penalty = 0.0;
    Eigen::MatrixXd LY;
    if (L) LY = L->matrix() * trace.Y.leftCols(steps);
    for (int t = 0; t < steps; ++t) {
        const auto& next = seq.events[t + 1];
        const double y = trace.Y(next.question, t);
        const double pr = std::clamp(y, kProbClamp, 1.0 - kProbClamp);
        data -= next.assessment ? std::log(pr) : std::log(1.0 - pr);
        if (L) penalty += trace.Y.col(t).dot(LY.col(t));
    }
    LossValue v;
    v.data = data / steps;
    v.penalty = penalty / steps;
    v.total = v.data + lambda * v.penalty;
    return v;
}

ParamSet backward(const ParamSet& p, const ForwardTrace& trace, const LearnerSequence& seq,
                  double lambda, const Laplacian* L) {
    const int T = trace.T();
    const int H = p.H, N = p.N;
    if (T < 2) throw std::runtime_error("backward: sequence has no prediction target (T < 2)");
    if (static_cast<int>(seq.events.size()) != T)
        throw std::invalid_argument("backward: trace/sequence length mismatch");
    for (int t = 0; t < T; ++t)
        if (trace.codes[t] !=
            encode_interaction(seq.events[t].question, seq.events[t].assessment, N))
            throw std::invalid_argument("backward: trace does not match sequence");
    if (lambda != 0.0 && (!L || L->n != N))
        throw std::invalid_argument("backward: Laplacian dimension mismatch");

    const int steps = T - 1;
    const double inv_steps = 1.0 / steps;

    // d loss / d y, then through the output sigmoid.
    Eigen::MatrixXd LY;
    if (L && lambda != 0.0) LY = L->matrix() * trace.Y.leftCols(steps);
    Eigen::MatrixXd dZ = Eigen::MatrixXd::Zero(N, T);
    for (int t = 0; t < steps; ++t) {
        Eigen::VectorXd dy = Eigen::VectorXd::Zero(N);
        if (L && lambda != 0.0) dy = (2.0 * lambda * inv_steps) * LY.col(t);
        const auto& next = seq.events[t + 1];
        const double y = trace.Y(next.question, t);
        if (y > kProbClamp && y < 1.0 - kProbClamp)
            dy[next.question] += (y - next.assessment) / (y * (1.0 - y)) * inv_steps;
        dZ.col(t) = dy.cwiseProduct(trace.Y.col(t))
                        .cwiseProduct((1.0 - trace.Y.col(t).array()).matrix());
    }

    ParamSet grad(p.K, p.H, p.N);
    grad.W_yh = dZ * trace.Hd.transpose();
    grad.b_y = dZ.rowwise().sum();

    Eigen::MatrixXd dHd = p.W_yh.transpose() * dZ;
    Eigen::MatrixXd dHs;
    if (trace.train_mode && trace.dropout_p > 0.0)
        dHs = dHd.cwiseProduct(trace.mask) / (1.0 - trace.dropout_p);
    else
        dHs = std::move(dHd);

    // Backward through time; per-step pre-activation gradients are collected
    // into dA so the weight gradients become single products afterwards.
    Eigen::MatrixXd dA(4 * H, T);
    Eigen::VectorXd dh_rec = Eigen::VectorXd::Zero(H);
    Eigen::VectorXd dc_rec = Eigen::VectorXd::Zero(H);
    Eigen::VectorXd tanh_c(H), dh(H), dc(H), d_i(H), d_f(H), d_o(H), d_g(H);
    for (int t = T - 1; t >= 0; --t) {
        dh = dHs.col(t) + dh_rec;
        tanh_c = trace.C.col(t).array().tanh();
        d_o = dh.cwiseProduct(tanh_c);
        dc = dc_rec +
             dh.cwiseProduct(trace.O.col(t))
                 .cwiseProduct((1.0 - tanh_c.array().square()).matrix());
        d_i = dc.cwiseProduct(trace.G.col(t));
        d_g = dc.cwiseProduct(trace.I.col(t));
        if (t > 0) {
            d_f = dc.cwiseProduct(trace.C.col(t - 1));
            dc_rec = dc.cwiseProduct(trace.F.col(t));
        } else {
            d_f.setZero();
        }

        auto sig_back = [](const Eigen::VectorXd& d, const Eigen::VectorXd& s) {
            return d.cwiseProduct(s).cwiseProduct((1.0 - s.array()).matrix());
        };
        dA.col(t).segment(0 * H, H) = sig_back(d_i, trace.I.col(t));
        dA.col(t).segment(1 * H, H) = sig_back(d_f, trace.F.col(t));
        dA.col(t).segment(2 * H, H) = sig_back(d_o, trace.O.col(t));
        dA.col(t).segment(3 * H, H) =
            d_g.cwiseProduct((1.0 - trace.G.col(t).array().square()).matrix());

        dh_rec = p.U_g.transpose() * dA.col(t);
    }

    grad.W_g = dA * trace.X.transpose();
    grad.b_g = dA.rowwise().sum();
    if (T > 1)
        grad.U_g = dA.rightCols(T - 1) * trace.Hs.leftCols(T - 1).transpose();

    const Eigen::MatrixXd dX = p.W_g.transpose() * dA;
    for (int t = 0; t < T; ++t) grad.W_xv.col(trace.codes[t]) += dX.col(t);
    return grad;
}

} // namespace qdkt
