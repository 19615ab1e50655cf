#include "cama/cam.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace cama {

HeatMap cam_heatmap(const ForwardTrace& trace, const ModelParams& params) {
    const Matrix& h_last = trace.tape->value(trace.hidden.back());
    if (h_last.cols() != params.out_weight.cols())
        throw std::invalid_argument("cam_heatmap: hidden width " + h_last.shape_str() +
                                    " vs output weight " + params.out_weight.shape_str());
    Matrix heat(h_last.rows(), params.out_weight.rows());
    gemm_nt_acc(heat, h_last, params.out_weight);
    for (size_t i = 0; i < heat.size(); ++i)
        if (heat.data()[i] < 0.0) heat.data()[i] = 0.0;
    return heat;
}

HeatMap grad_cam_heatmap(const ForwardTrace& trace, const ModelParams& params) {
    Tape& tape = *trace.tape;
    const int num_classes = tape.value(trace.logits).cols();
    const int layers = static_cast<int>(trace.hidden.size());
    const int n = tape.value(trace.hidden[0]).rows();
    const int width = tape.value(trace.hidden[0]).cols();
    for (Tape::Ref h : trace.hidden)
        if (tape.value(h).cols() != width)
            throw std::invalid_argument("grad_cam_heatmap: hidden dims differ across layers");

    // alpha[l] is width x C: column c holds the node-averaged gradient of
    // logit c w.r.t. hidden layer l.
    tape.set_retain_interior_grads(true);
    std::vector<Matrix> alpha(layers, Matrix(width, num_classes));
    for (int c = 0; c < num_classes; ++c) {
        Matrix pick(num_classes, 1);
        pick(c, 0) = 1.0;
        Tape::Ref zc = tape.matmul(trace.logits, tape.constant(pick));
        tape.reset_grads();
        tape.backward(zc);
        for (int l = 0; l < layers; ++l) {
            if (!tape.has_grad(trace.hidden[l]))
                throw std::logic_error(
                    "grad_cam_heatmap: hidden layers carry no gradient; build the trace with "
                    "grad_features or grad_params");
            Matrix g = tape.grad_of(trace.hidden[l]);
            for (int j = 0; j < width; ++j) {
                double s = 0.0;
                for (int v = 0; v < g.rows(); ++v) s += g(v, j);
                alpha[l](j, c) = s / static_cast<double>(n);
            }
        }
    }

    Matrix heat(n, num_classes);
    for (int l = 0; l < layers; ++l) {
        Matrix layer_heat = gemm(tape.value(trace.hidden[l]), alpha[l]);
        for (size_t i = 0; i < layer_heat.size(); ++i)
            if (layer_heat.data()[i] > 0.0) heat.data()[i] += layer_heat.data()[i];
    }
    for (size_t i = 0; i < heat.size(); ++i) heat.data()[i] /= static_cast<double>(layers);
    return heat;
}

std::vector<std::vector<int>> column_rank(const HeatMap& heat) {
    std::vector<std::vector<int>> cols(heat.cols());
    for (int c = 0; c < heat.cols(); ++c) {
        std::vector<int>& order = cols[c];
        order.resize(heat.rows());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return heat(a, c) > heat(b, c); });
    }
    return cols;
}

std::vector<int> global_rank(const HeatMap& heat) {
    const auto cols = column_rank(heat);
    const int n = heat.rows();
    std::vector<int> out;
    out.reserve(n);
    std::vector<char> seen(n, 0);
    for (int pos = 0; pos < n && static_cast<int>(out.size()) < n; ++pos) {
        for (const auto& col : cols) {
            const int v = col[pos];
            if (!seen[v]) {
                seen[v] = 1;
                out.push_back(v);
            }
        }
    }
    return out;
}

RankedCamMatrix ranked_cam_matrix(const HeatMap& heat) {
    RankedCamMatrix r;
    r.columns = column_rank(heat);
    r.columns.push_back(global_rank(heat));
    return r;
}

std::string heatmap_csv(const HeatMap& heat) {
    std::string out = "node_id";
    for (int c = 0; c < heat.cols(); ++c) out += ",class_" + std::to_string(c);
    out += "\n";
    char buf[64];
    for (int v = 0; v < heat.rows(); ++v) {
        out += std::to_string(v);
        for (int c = 0; c < heat.cols(); ++c) {
            std::snprintf(buf, sizeof buf, ",%.12g", heat(v, c));
            out += buf;
        }
        out += "\n";
    }
    return out;
}

}  // namespace cama
