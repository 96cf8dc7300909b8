#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "sadmil/training.hpp"

namespace sadmil {

/// SplitMix64 finalizer; derives independent run seeds from a master seed.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed of repeat `r`. Shared by every alpha and mode so runs are paired.
inline std::uint64_t repeat_seed(std::uint64_t master, std::size_t repeat) {
    return mix_seed(master ^ mix_seed(static_cast<std::uint64_t>(repeat) + 1));
}

struct SweepSpec {
    std::vector<double> alphas{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    std::vector<SaMode> modes{SaMode::s1, SaMode::s2};
    std::size_t repeats = 5;
    std::uint64_t master_seed = 2023;
    std::size_t parallel = 1;

    void validate() const {
        if (repeats == 0) throw ConfigError("sweep.repeats must be >= 1");
        if (alphas.empty()) throw ConfigError("sweep.alphas must not be empty");
        if (modes.empty()) throw ConfigError("sweep.modes must not be empty");
        for (double a : alphas)
            if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("sweep.alphas entries must lie in [0, 1]");
        for (SaMode m : modes)
            if (m == SaMode::none) throw ConfigError("sweep.modes cannot contain 'none'");
        if (parallel == 0) throw ConfigError("sweep.parallel must be >= 1");
    }
};

struct SweepRun {
    SaMode mode = SaMode::s1;
    double alpha = 0.0;
    std::size_t repeat = 0;
    RunReport report;
};

/// One (mode, alpha) cell: mean and sample standard deviation over repeats.
struct SweepSummaryRow {
    SaMode mode = SaMode::s1;
    double alpha = 0.0;
    std::size_t runs = 0;
    // columns: scan acc pre rec f1 auc, slice acc pre rec f1 auc
    std::vector<double> mean, sd;
};

struct SweepTable {
    std::vector<SweepRun> runs;  // ordered by (mode, alpha, repeat)
    std::vector<SweepSummaryRow> summary;
};

inline std::vector<double> metric_row(const RunReport& r) {
    std::vector<double> row;
    const auto push = [&row](const std::optional<LevelMetrics>& lm) {
        if (!lm) {
            row.insert(row.end(), 5, std::nan(""));
            return;
        }
        row.insert(row.end(), {lm->metrics.acc, lm->metrics.pre, lm->metrics.rec, lm->metrics.f1,
                               lm->auc.value_or(std::nan(""))});
    };
    push(r.test ? std::optional<LevelMetrics>(r.test->scan) : std::nullopt);
    push(r.test ? r.test->slice : std::nullopt);
    return row;
}

inline std::vector<SweepSummaryRow> summarize(const std::vector<SweepRun>& runs) {
    std::vector<SweepSummaryRow> out;
    for (std::size_t i = 0; i < runs.size();) {
        std::size_t j = i;
        while (j < runs.size() && runs[j].mode == runs[i].mode && runs[j].alpha == runs[i].alpha) ++j;
        SweepSummaryRow row;
        row.mode = runs[i].mode;
        row.alpha = runs[i].alpha;
        row.runs = j - i;
        std::vector<std::vector<double>> cols;
        for (std::size_t k = i; k < j; ++k) cols.push_back(metric_row(runs[k].report));
        const std::size_t width = cols.front().size();
        for (std::size_t c = 0; c < width; ++c) {
            double s = 0.0;
            for (const auto& r : cols) s += r[c];
            const double m = s / static_cast<double>(cols.size());
            double v = 0.0;
            for (const auto& r : cols) v += (r[c] - m) * (r[c] - m);
            row.mean.push_back(m);
            row.sd.push_back(cols.size() > 1 ? std::sqrt(v / static_cast<double>(cols.size() - 1)) : 0.0);
        }
        out.push_back(std::move(row));
        i = j;
    }
    return out;
}

/// Trains repeats x |alphas| runs per mode. Runs are independent and may
/// execute on `spec.parallel` threads; results are stored by grid position,
/// so the table does not depend on scheduling.
inline SweepTable sweep_alpha(const DatasetSplits& data, const ModelConfig& model, const TrainConfig& base,
                              const LossConfig& base_loss, const SweepSpec& spec) {
    spec.validate();
    struct Job {
        SaMode mode;
        double alpha;
        std::size_t repeat;
    };
    std::vector<Job> jobs;
    for (SaMode m : spec.modes)
        for (double a : spec.alphas)
            for (std::size_t r = 0; r < spec.repeats; ++r) jobs.push_back({m, a, r});

    std::vector<SweepRun> runs(jobs.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    const auto worker = [&] {
        for (;;) {
            const std::size_t k = next.fetch_add(1);
            if (k >= jobs.size()) return;
            try {
                TrainConfig tc = base;
                tc.seed = repeat_seed(spec.master_seed, jobs[k].repeat);
                LossConfig lc = base_loss;
                lc.alpha = jobs[k].alpha;
                lc.sa_mode = jobs[k].mode;
                runs[k] = SweepRun{jobs[k].mode, jobs[k].alpha, jobs[k].repeat, train(data, model, tc, lc).report};
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(jobs.size());
                return;
            }
        }
    };

    const std::size_t n_threads = std::min(spec.parallel, jobs.size());
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);

    SweepTable table;
    table.runs = std::move(runs);
    table.summary = summarize(table.runs);
    return table;
}

}  // namespace sadmil
