#include "mmfbsde/training/trainer.hpp"

#include "mmfbsde/training/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <thread>

namespace mmfbsde::train {
namespace {

const char* const kBlockNames[] = {"layer1.W", "layer1.U", "layer1.b", "layer2.W", "layer2.U",
                                   "layer2.b", "out.W",    "out.b",    "psi.y0",   "psi.z0"};

struct ChunkResult {
    double loss_sum = 0.0;
    double y_star_sum = 0.0;
    std::vector<double> grad;
    std::size_t valid = 0;
    std::size_t diverged = 0;
};

ChunkResult run_chunk(const ParamStore& store, const core::RolloutContext& ctx,
                      const core::NoiseSource& noise, std::vector<std::size_t> samples) {
    ChunkResult out;
    out.grad.assign(store.layout.total(), 0.0);
    const double beta = ctx.costs().beta;
    while (!samples.empty()) {
        ad::Tape tape;
        ad::TapeEngine eng(tape);
        std::vector<ad::Var> leaves;
        for (const char* name : kBlockNames) leaves.push_back(eng.variable(store.block(store.layout.find(name))));
        const nn::NetHandles<ad::Var> net{{leaves[0], leaves[1], leaves[2]},
                                          {leaves[3], leaves[4], leaves[5]},
                                          leaves[6],
                                          leaves[7]};
        core::LstmPredictor<ad::Var> predictor(net);
        const auto rec = core::rollout(eng, ctx, leaves[8], leaves[9], predictor, noise, samples);
        const auto bad = core::diverged_samples(eng, rec);

        std::vector<std::size_t> survivors;
        for (std::size_t i = 0; i < samples.size(); ++i)
            if (!bad[i]) survivors.push_back(samples[i]);
        if (survivors.size() != samples.size()) {
            out.diverged += samples.size() - survivors.size();
            samples = std::move(survivors);
            continue;
        }

        const ad::Var s = core::terminal_loss_sum(eng, rec.y_star, rec.y.back(), beta);
        const auto grads = tape.backward(s);
        for (std::size_t i = 0; i < leaves.size(); ++i) {
            const auto& block = store.layout.find(kBlockNames[i]);
            const Matrix& g = grads[leaves[i]];
            std::copy(g.data(), g.data() + g.size(), out.grad.begin() + static_cast<std::ptrdiff_t>(block.offset));
        }
        out.loss_sum = tape.value(s)[0];
        for (double v : tape.value(rec.y_star).values()) out.y_star_sum += v;
        out.valid = samples.size();
        break;
    }
    return out;
}

}  // namespace

void TrainConfig::validate() const {
    if (iterations < 1) throw std::invalid_argument("train.iterations must be at least 1");
    if (batch < 1) throw std::invalid_argument("train.batch must be at least 1");
    if (chunk < 1) throw std::invalid_argument("train.chunk must be at least 1");
    if (workers < 1) throw std::invalid_argument("workers must be at least 1");
    if (grad_clip < 0.0) throw std::invalid_argument("train.grad_clip must be non-negative");
    if (!(max_divergence_fraction >= 0.0 && max_divergence_fraction <= 1.0))
        throw std::invalid_argument("train.max_divergence_fraction must lie in [0, 1]");
}

LossGradient loss_and_gradient(const ParamStore& store, const core::RolloutContext& ctx,
                               const core::NoiseSource& noise, std::size_t batch, std::size_t chunk,
                               std::size_t workers) {
    const std::size_t n_chunks = (batch + chunk - 1) / chunk;
    std::vector<ChunkResult> results(n_chunks);
    auto work = [&](std::size_t first) {
        for (std::size_t c = first; c < n_chunks; c += workers) {
            std::vector<std::size_t> samples;
            for (std::size_t i = c * chunk; i < std::min(batch, (c + 1) * chunk); ++i) samples.push_back(i);
            results[c] = run_chunk(store, ctx, noise, std::move(samples));
        }
    };
    workers = std::max<std::size_t>(1, std::min(workers, n_chunks));
    if (workers == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    work(w);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    LossGradient out;
    out.grad.assign(store.layout.total(), 0.0);
    double loss_sum = 0.0, y_star_sum = 0.0;
    for (const auto& r : results) {
        loss_sum += r.loss_sum;
        y_star_sum += r.y_star_sum;
        out.valid += r.valid;
        out.diverged += r.diverged;
        for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] += r.grad[i];
    }
    if (out.valid == 0) {
        out.loss = std::numeric_limits<double>::quiet_NaN();
        out.mean_terminal_cost = out.loss;
        return out;
    }
    const double inv = 1.0 / static_cast<double>(out.valid);
    const double lambda = ctx.costs().lambda;
    for (auto& g : out.grad) g *= inv;
    for (const auto& b : store.layout.blocks()) {
        if (!b.regularized) continue;
        for (std::size_t i = b.offset; i < b.offset + b.shape.size(); ++i)
            out.grad[i] += 2.0 * lambda * store.values[i];
    }
    out.loss = loss_sum * inv + lambda * store.theta_norm2();
    out.mean_terminal_cost = y_star_sum * inv;
    return out;
}

double loss_value(const ParamStore& store, const core::RolloutContext& ctx,
                  const core::NoiseSource& noise, std::size_t batch) {
    std::vector<std::size_t> samples(batch);
    for (std::size_t i = 0; i < batch; ++i) samples[i] = i;
    const auto z0 = store.z0();
    const auto run = core::rollout_batch(store.net(), store.y0(), z0, ctx, noise, samples);
    ad::ValueEngine eng;
    const Matrix s = core::terminal_loss_sum(eng, run.record.y_star, run.record.y.back(), ctx.costs().beta);
    return s[0] / static_cast<double>(batch) + ctx.costs().lambda * store.theta_norm2();
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<IterationLog>& history) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "# mmfbsde-loss/1\n";
    out << "iteration,loss,mean_terminal_cost,divergences\n";
    char buf[128];
    for (const auto& h : history) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%zu\n", h.iteration, h.loss, h.mean_terminal_cost,
                      h.divergences);
        out << buf;
    }
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

TrainResult train(const TrainConfig& cfg, const core::RolloutContext& ctx, ParamStore init,
                  const std::function<void(const IterationLog&)>& progress) {
    cfg.validate();
    TrainResult result;
    result.store = std::move(init);
    auto& store = result.store;
    if (!store.all_finite()) throw std::invalid_argument("train: initial parameters are not finite");

    const bool persist = !cfg.out_dir.empty();
    auto checkpoint = [&](std::size_t iteration) {
        if (persist) save_checkpoint(store, {cfg.config_hash, cfg.seed, iteration}, cfg.out_dir / "checkpoint");
    };
    auto finish = [&] {
        if (persist) write_loss_csv(cfg.out_dir / "loss.csv", result.history);
    };

    for (std::size_t k = 1; k <= cfg.iterations; ++k) {
        const core::CounterNoise noise(cfg.seed, k);
        auto lg = loss_and_gradient(store, ctx, noise, cfg.batch, cfg.chunk, cfg.workers);

        const double fraction = static_cast<double>(lg.diverged) / static_cast<double>(cfg.batch);
        if (fraction > cfg.max_divergence_fraction) {
            result.aborted = true;
            result.abort_reason = "iteration " + std::to_string(k) + ": " + std::to_string(lg.diverged) +
                                  " of " + std::to_string(cfg.batch) + " samples diverged";
            break;
        }
        if (!std::isfinite(lg.loss)) {
            result.aborted = true;
            result.abort_reason = "iteration " + std::to_string(k) + ": non-finite loss";
            break;
        }

        if (cfg.grad_clip > 0.0) {
            double norm2 = 0.0;
            for (double g : lg.grad) norm2 += g * g;
            const double norm = std::sqrt(norm2);
            if (norm > cfg.grad_clip)
                for (auto& g : lg.grad) g *= cfg.grad_clip / norm;
        }

        const IterationLog log{k, lg.loss, lg.mean_terminal_cost, lg.diverged};
        const auto saved_values = store.values;
        const auto saved_adam = store.adam;
        try {
            nn::adam_step(store.adam, store.values, lg.grad, &store.layout);
        } catch (const nn::NonFiniteGradient&) {
            ++result.rollbacks;
        }
        if (!store.all_finite()) {
            store.values = saved_values;
            store.adam = saved_adam;
            ++result.rollbacks;
        }
        result.history.push_back(log);
        if (progress) progress(log);
        if (cfg.checkpoint_every > 0 && k % cfg.checkpoint_every == 0 && k != cfg.iterations) checkpoint(k);
    }
    // On abort the store still holds the last accepted step.
    checkpoint(result.history.size());
    finish();
    return result;
}

}  // namespace mmfbsde::train
