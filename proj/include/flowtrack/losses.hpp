#ifndef FLOWTRACK_LOSSES_HPP
#define FLOWTRACK_LOSSES_HPP

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "flowtrack/box.hpp"
#include "flowtrack/errors.hpp"

namespace flowtrack {

// One RoI row of a training batch. Probabilities span K+1 classes including
// background at index 0; label 0 marks a background RoI.
struct RoiEntry {
    std::vector<double> probs;
    int label = 0;
    Delta pred_box;        // single-frame regression prediction
    Delta target_box;
    Delta pred_motion;     // inter-frame regression prediction
    Delta target_motion;
    bool correspondence_valid = false;
};

struct RoiBatch {
    std::vector<RoiEntry> rois;

    std::size_t size() const { return rois.size(); }
    int foreground_count() const {
        int n = 0;
        for (const auto& r : rois) n += r.label >= 1 ? 1 : 0;
        return n;
    }
    int correspondence_count() const {
        int n = 0;
        for (const auto& r : rois) n += (r.label >= 1 && r.correspondence_valid) ? 1 : 0;
        return n;
    }
};

struct LossConfig {
    double lambda_reg = 1.0;
    double lambda_frm = 1.0;
    double beta = 1.0;  // smooth-L1 transition point

    void validate() const {
        if (lambda_reg < 0.0 || lambda_frm < 0.0) throw ValidationError("loss weights must be >= 0");
        if (beta <= 0.0) throw ValidationError("smooth-L1 beta must be > 0");
    }
};

struct LossBreakdown {
    double total = 0.0;
    double cls = 0.0;
    double reg = 0.0;
    double frm = 0.0;
};

constexpr double kProbClamp = 1e-12;

// Cross-entropy of the labeled class, clamped away from log(0).
inline double cls_loss(const std::vector<double>& probs, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= probs.size())
        throw ValidationError("class label " + std::to_string(label) + " out of range");
    double p = probs[label];
    if (p < kProbClamp) p = kProbClamp;
    return -std::log(p);
}

inline double smooth_l1_scalar(double e, double beta) {
    double a = std::fabs(e);
    return a < beta ? 0.5 * e * e / beta : a - 0.5 * beta;
}

// d/de of smooth_l1_scalar.
inline double smooth_l1_grad_scalar(double e, double beta) {
    double a = std::fabs(e);
    if (a < beta) return e / beta;
    return e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0);
}

// Summed over the four offset components.
inline double smooth_l1(const Delta& d, const Delta& t, double beta) {
    return smooth_l1_scalar(d.dx - t.dx, beta) + smooth_l1_scalar(d.dy - t.dy, beta) +
           smooth_l1_scalar(d.dw - t.dw, beta) + smooth_l1_scalar(d.dh - t.dh, beta);
}

namespace detail {

inline void validate_batch(const RoiBatch& batch) {
    if (batch.rois.empty()) throw ValidationError("loss batch must contain at least one RoI");
    for (std::size_t i = 0; i < batch.rois.size(); ++i) {
        const RoiEntry& r = batch.rois[i];
        if (r.probs.empty()) throw ValidationError("RoI " + std::to_string(i) + " has no probabilities");
        double sum = 0.0;
        for (double p : r.probs) {
            if (p < 0.0 || !std::isfinite(p))
                throw ValidationError("RoI " + std::to_string(i) + " has an invalid probability");
            sum += p;
        }
        if (std::fabs(sum - 1.0) > 1e-5)
            throw ValidationError("RoI " + std::to_string(i) + " probabilities sum to " +
                                  std::to_string(sum));
        if (r.label < 0 || static_cast<std::size_t>(r.label) >= r.probs.size())
            throw ValidationError("RoI " + std::to_string(i) + " label out of range");
    }
}

}  // namespace detail

// Classification over all rows, single-frame regression over foreground
// rows, inter-frame regression over foreground rows with a valid
// correspondence. Empty denominators make their term 0, never NaN.
inline LossBreakdown total_loss(const RoiBatch& batch, const LossConfig& cfg) {
    cfg.validate();
    detail::validate_batch(batch);
    const double n = static_cast<double>(batch.size());
    const int n_fg = batch.foreground_count();
    const int n_cor = batch.correspondence_count();
    LossBreakdown out;
    double cls_sum = 0.0, reg_sum = 0.0, frm_sum = 0.0;
    for (const RoiEntry& r : batch.rois) {
        cls_sum += cls_loss(r.probs, r.label);
        if (r.label >= 1) {
            reg_sum += smooth_l1(r.pred_box, r.target_box, cfg.beta);
            if (r.correspondence_valid) frm_sum += smooth_l1(r.pred_motion, r.target_motion, cfg.beta);
        }
    }
    out.cls = cls_sum / n;
    out.reg = n_fg > 0 ? cfg.lambda_reg * reg_sum / n_fg : 0.0;
    out.frm = n_cor > 0 ? cfg.lambda_frm * frm_sum / n_cor : 0.0;
    out.total = out.cls + out.reg + out.frm;
    return out;
}

struct RoiGrad {
    std::vector<double> dprobs;
    Delta dpred_box;
    Delta dpred_motion;
};

// Analytic gradients w.r.t. every probability vector and both predicted
// offset sets. Background rows get exactly zero regression gradients.
inline std::vector<RoiGrad> total_loss_grad(const RoiBatch& batch, const LossConfig& cfg) {
    cfg.validate();
    detail::validate_batch(batch);
    const double n = static_cast<double>(batch.size());
    const int n_fg = batch.foreground_count();
    const int n_cor = batch.correspondence_count();
    std::vector<RoiGrad> grads(batch.size());
    for (std::size_t i = 0; i < batch.rois.size(); ++i) {
        const RoiEntry& r = batch.rois[i];
        RoiGrad& g = grads[i];
        g.dprobs.assign(r.probs.size(), 0.0);
        double p = r.probs[r.label];
        if (p >= kProbClamp) g.dprobs[r.label] = -1.0 / (p * n);  // clamped region has zero slope
        if (r.label >= 1 && n_fg > 0) {
            double s = cfg.lambda_reg / n_fg;
            g.dpred_box.dx = s * smooth_l1_grad_scalar(r.pred_box.dx - r.target_box.dx, cfg.beta);
            g.dpred_box.dy = s * smooth_l1_grad_scalar(r.pred_box.dy - r.target_box.dy, cfg.beta);
            g.dpred_box.dw = s * smooth_l1_grad_scalar(r.pred_box.dw - r.target_box.dw, cfg.beta);
            g.dpred_box.dh = s * smooth_l1_grad_scalar(r.pred_box.dh - r.target_box.dh, cfg.beta);
            if (r.correspondence_valid && n_cor > 0) {
                double sf = cfg.lambda_frm / n_cor;
                g.dpred_motion.dx =
                    sf * smooth_l1_grad_scalar(r.pred_motion.dx - r.target_motion.dx, cfg.beta);
                g.dpred_motion.dy =
                    sf * smooth_l1_grad_scalar(r.pred_motion.dy - r.target_motion.dy, cfg.beta);
                g.dpred_motion.dw =
                    sf * smooth_l1_grad_scalar(r.pred_motion.dw - r.target_motion.dw, cfg.beta);
                g.dpred_motion.dh =
                    sf * smooth_l1_grad_scalar(r.pred_motion.dh - r.target_motion.dh, cfg.beta);
            }
        }
    }
    return grads;
}

}  // namespace flowtrack

#endif  // FLOWTRACK_LOSSES_HPP
