#include "qdkt/graph.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

namespace qdkt {

namespace {

void check_index(int idx, int n) {
    if (idx < 0 || idx >= n)
        throw std::out_of_range("graph: node index " + std::to_string(idx) +
                                " outside [0," + std::to_string(n) + ")");
}

std::vector<Edge> canonicalize_summed(const std::vector<Edge>& weights, int n) {
    std::unordered_map<int64_t, double> acc;
    acc.reserve(weights.size());
    for (const Edge& e : weights) {
        check_index(e.i, n);
        check_index(e.j, n);
        if (e.w < 0.0)
            throw std::invalid_argument("graph: negative edge weight");
        if (e.i == e.j) continue; // contributes (y_i - y_i)^2 = 0
        int a = std::min(e.i, e.j), b = std::max(e.i, e.j);
        acc[static_cast<int64_t>(a) * n + b] += e.w;
    }
    std::vector<Edge> out;
    out.reserve(acc.size());
    for (const auto& [key, w] : acc)
        out.push_back({static_cast<int>(key / n), static_cast<int>(key % n), w});
    std::sort(out.begin(), out.end(), [](const Edge& x, const Edge& y) {
        return x.i != y.i ? x.i < y.i : x.j < y.j;
    });
    return out;
}

} // namespace

QuestionGraph build_skill_graph(const std::vector<std::vector<int>>& question_skills, int n) {
    if (static_cast<int>(question_skills.size()) > n)
        throw std::invalid_argument("build_skill_graph: more skill entries than nodes");

    // Group questions per skill, then walk pairs within each group. A pair
    // sharing several skills would be produced twice, so dedupe to weight 1.
    std::unordered_map<int, std::vector<int>> by_skill;
    for (int q = 0; q < static_cast<int>(question_skills.size()); ++q) {
        check_index(q, n);
        for (int s : question_skills[q]) by_skill[s].push_back(q);
    }

    std::vector<int64_t> pairs;
    for (const auto& [skill, qs] : by_skill) {
        (void)skill;
        for (size_t a = 0; a < qs.size(); ++a)
            for (size_t b = a + 1; b < qs.size(); ++b) {
                int i = std::min(qs[a], qs[b]), j = std::max(qs[a], qs[b]);
                if (i != j) pairs.push_back(static_cast<int64_t>(i) * n + j);
            }
    }
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

    QuestionGraph g;
    g.n = n;
    g.edges.reserve(pairs.size());
    for (int64_t key : pairs)
        g.edges.push_back({static_cast<int>(key / n), static_cast<int>(key % n), 1.0});
    return g;
}

QuestionGraph build_weighted_graph(const std::vector<Edge>& weights, int n) {
    if (n < 0) throw std::invalid_argument("build_weighted_graph: negative n");
    QuestionGraph g;
    g.n = n;
    g.edges = canonicalize_summed(weights, n);
    return g;
}

Laplacian laplacian(const QuestionGraph& g) {
    Laplacian L;
    L.n = g.n;
    L.edges = g.edges;
    L.degree = Eigen::VectorXd::Zero(g.n);
    for (const Edge& e : g.edges) {
        check_index(e.i, g.n);
        check_index(e.j, g.n);
        if (e.w < 0.0) throw std::invalid_argument("laplacian: negative edge weight");
        L.degree[e.i] += e.w;
        L.degree[e.j] += e.w;
    }

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(L.edges.size() * 2 + L.n);
    for (int i = 0; i < L.n; ++i)
        if (L.degree[i] != 0.0) trip.emplace_back(i, i, L.degree[i]);
    for (const Edge& e : L.edges) {
        trip.emplace_back(e.i, e.j, -e.w);
        trip.emplace_back(e.j, e.i, -e.w);
    }
    L.mat.resize(L.n, L.n);
    L.mat.setFromTriplets(trip.begin(), trip.end());
    return L;
}

Eigen::MatrixXd Laplacian::dense() const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = degree[i];
    for (const Edge& e : edges) {
        m(e.i, e.j) -= e.w;
        m(e.j, e.i) -= e.w;
    }
    return m;
}

double quadratic_form(const Laplacian& L, const Eigen::VectorXd& y) {
    if (y.size() != L.n)
        throw std::invalid_argument("quadratic_form: vector length " + std::to_string(y.size()) +
                                    " != " + std::to_string(L.n));
    double acc = 0.0;
    for (const Edge& e : L.edges) {
        const double d = y[e.i] - y[e.j];
        acc += e.w * d * d;
    }
    return acc;
}

Eigen::VectorXd quadratic_form_grad(const Laplacian& L, const Eigen::VectorXd& y) {
    if (y.size() != L.n)
        throw std::invalid_argument("quadratic_form_grad: vector length " +
                                    std::to_string(y.size()) + " != " + std::to_string(L.n));
    Eigen::VectorXd g = 2.0 * L.degree.cwiseProduct(y);
    for (const Edge& e : L.edges) {
        g[e.i] -= 2.0 * e.w * y[e.j];
        g[e.j] -= 2.0 * e.w * y[e.i];
    }
    return g;
}

void write_edge_list(const QuestionGraph& g, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_edge_list: cannot open " + path);
    char buf[80];
    for (const Edge& e : g.edges) {
        std::snprintf(buf, sizeof buf, "%d %d %.17g\n", e.i, e.j, e.w);
        out << buf;
    }
}

QuestionGraph read_edge_list(const std::string& path, int n) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_edge_list: cannot open " + path);
    std::vector<Edge> edges;
    Edge e;
    while (in >> e.i >> e.j >> e.w) edges.push_back(e);
    return build_weighted_graph(edges, n);
}

} // namespace qdkt
