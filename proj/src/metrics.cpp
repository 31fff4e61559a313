#include "coevolve/metrics.hpp"

namespace coevolve {

std::vector<int> argmax_rows(const Matrix &p) {
    std::vector<int> out(p.rows());
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        Eigen::Index best = 0;
        p.row(i).maxCoeff(&best);
        out[i] = static_cast<int>(best);
    }
    return out;
}

double accuracy(const std::vector<int> &pred, const LabelVector &labels, const Mask &mask) {
    if (pred.size() != labels.size() || mask.size() != labels.size())
        throw std::invalid_argument("accuracy: length mismatch");
    long hit = 0, total = 0;
    for (size_t i = 0; i < labels.size(); ++i) {
        if (!mask[i]) continue;
        ++total;
        if (pred[i] == labels[i]) ++hit;
    }
    if (total == 0) throw std::invalid_argument("accuracy: empty mask");
    return static_cast<double>(hit) / static_cast<double>(total);
}

double macro_f1(const std::vector<int> &pred, const LabelVector &labels, const Mask &mask,
                int num_classes) {
    if (pred.size() != labels.size() || mask.size() != labels.size())
        throw std::invalid_argument("macro_f1: length mismatch");
    std::vector<long> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
    std::vector<char> present(num_classes, 0);
    for (size_t i = 0; i < labels.size(); ++i) {
        if (!mask[i]) continue;
        int y = labels[i], yhat = pred[i];
        if (y < 0 || y >= num_classes || yhat < 0 || yhat >= num_classes)
            throw std::invalid_argument("macro_f1: class out of range");
        present[y] = present[yhat] = 1;
        if (y == yhat)
            ++tp[y];
        else {
            ++fp[yhat];
            ++fn[y];
        }
    }
    double sum = 0.0;
    int classes = 0;
    for (int c = 0; c < num_classes; ++c) {
        if (!present[c]) continue;
        ++classes;
        double denom = static_cast<double>(2 * tp[c] + fp[c] + fn[c]);
        if (denom > 0.0) sum += 2.0 * static_cast<double>(tp[c]) / denom;
    }
    if (classes == 0) throw std::invalid_argument("macro_f1: empty mask");
    return sum / static_cast<double>(classes);
}

} // namespace coevolve
