#include "hsdc/split_system.hpp"

#include <cmath>
#include <stdexcept>

namespace hsdc {

void eval_f_e(const SplitSystem& sys, const State& y, State& out) {
    if (y.layout() != sys.layout())
        throw ShapeError("eval_f_e: state layout does not match system");
    State lambda(sys.layout()), yinf(sys.layout());
    sys.lambda_diag(y, lambda);
    sys.y_inf(y, yinf);
    for (std::size_t i = 0; i < y.size(); ++i)
        out[i] = lambda[i] * (y[i] - yinf[i]);
}

namespace {

class Dahlquist final : public SplitSystem {
public:
    Dahlquist(double lI, double lE, double le, double y0)
        : lI_(lI), lE_(lE), le_(le), y0_(y0) {
        if (!std::isfinite(lI) || !std::isfinite(lE) || !std::isfinite(le))
            throw NonFiniteError("make_dahlquist: non-finite rate");
        layout_ = BlockLayout{0, 0, 1};
    }

    const BlockLayout& layout() const override { return layout_; }

    void eval_f_I(double, const State& y, State& out) const override { out[0] = lI_ * y[0]; }
    void eval_f_E(double, const State& y, State& out) const override { out[0] = lE_ * y[0]; }
    void lambda_diag(const State&, State& out) const override { out[0] = le_; }
    void y_inf(const State&, State& out) const override { out[0] = 0.0; }

    void implicit_solve(double alpha, const State& b, State& out) const override {
        out[0] = b[0] / (1.0 - alpha * lI_);
    }

    std::optional<State> exact_reference(double t) const override {
        State y(layout_);
        y[0] = y0_ * std::exp((lI_ + lE_ + le_) * t);
        return y;
    }

    State initial_state() const override {
        State y(layout_);
        y[0] = y0_;
        return y;
    }

private:
    double lI_, lE_, le_, y0_;
    BlockLayout layout_;
};

class LinearGating final : public SplitSystem {
public:
    LinearGating(double lambda, double w_inf, double y0)
        : lambda_(lambda), w_inf_(w_inf), y0_(y0) {
        if (!std::isfinite(lambda)) throw NonFiniteError("make_linear_gating: non-finite rate");
        layout_ = BlockLayout{0, 0, 1};
    }

    const BlockLayout& layout() const override { return layout_; }

    void eval_f_I(double, const State&, State& out) const override { out[0] = 0.0; }
    void eval_f_E(double, const State&, State& out) const override { out[0] = 0.0; }
    void lambda_diag(const State&, State& out) const override { out[0] = lambda_; }
    void y_inf(const State&, State& out) const override { out[0] = w_inf_; }

    void implicit_solve(double, const State& b, State& out) const override { out[0] = b[0]; }

    std::optional<State> exact_reference(double t) const override {
        State y(layout_);
        y[0] = w_inf_ + std::exp(lambda_ * t) * (y0_ - w_inf_);
        return y;
    }

    State initial_state() const override {
        State y(layout_);
        y[0] = y0_;
        return y;
    }

private:
    double lambda_, w_inf_, y0_;
    BlockLayout layout_;
};

} // namespace

std::shared_ptr<SplitSystem> make_dahlquist(double lambda_I, double lambda_E, double lambda_e,
                                            double y0) {
    return std::make_shared<Dahlquist>(lambda_I, lambda_E, lambda_e, y0);
}

std::shared_ptr<SplitSystem> make_linear_gating(double lambda, double w_inf, double y0) {
    return std::make_shared<LinearGating>(lambda, w_inf, y0);
}

} // namespace hsdc
