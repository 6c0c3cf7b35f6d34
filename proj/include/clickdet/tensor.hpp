#pragma once

#include <condition_variable>
#include <cstddef>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace clickdet {

// Fixed-width worker pool with static index partitioning. Work is split into
// one contiguous chunk per worker, so the assignment of items to threads (and
// therefore every in-thread accumulation order) is independent of timing.
class ThreadPool {
public:
    explicit ThreadPool(int n_threads) {
        n_threads = std::max(1, n_threads);
        for (int w = 1; w < n_threads; ++w)
            workers_.emplace_back([this, w] { worker_loop(w); });
        n_ = n_threads;
    }

    ~ThreadPool() {
        {
            std::unique_lock<std::mutex> lock(mu_);
            stop_ = true;
        }
        cv_start_.notify_all();
        for (auto& t : workers_) t.join();
    }

    int size() const { return n_; }

    // fn(i) is invoked exactly once for every i in [0, n); blocks until done.
    void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
        if (n == 0) return;
        if (n_ == 1 || n == 1) {
            for (std::size_t i = 0; i < n; ++i) fn(i);
            return;
        }
        {
            std::unique_lock<std::mutex> lock(mu_);
            job_ = &fn;
            job_n_ = n;
            pending_ = n_ - 1;
            ++generation_;
        }
        cv_start_.notify_all();
        run_chunk(0, n, fn);  // main thread takes chunk 0
        std::unique_lock<std::mutex> lock(mu_);
        cv_done_.wait(lock, [this] { return pending_ == 0; });
        job_ = nullptr;
    }

private:
    void run_chunk(int w, std::size_t n, const std::function<void(std::size_t)>& fn) {
        const std::size_t lo = n * static_cast<std::size_t>(w) / n_;
        const std::size_t hi = n * static_cast<std::size_t>(w + 1) / n_;
        for (std::size_t i = lo; i < hi; ++i) fn(i);
    }

    void worker_loop(int w) {
        std::uint64_t seen = 0;
        for (;;) {
            const std::function<void(std::size_t)>* job = nullptr;
            std::size_t n = 0;
            {
                std::unique_lock<std::mutex> lock(mu_);
                cv_start_.wait(lock, [&] { return stop_ || generation_ != seen; });
                if (stop_) return;
                seen = generation_;
                job = job_;
                n = job_n_;
            }
            if (job) run_chunk(w, n, *job);
            {
                std::unique_lock<std::mutex> lock(mu_);
                if (--pending_ == 0) cv_done_.notify_one();
            }
        }
    }

    std::vector<std::thread> workers_;
    int n_ = 1;
    std::mutex mu_;
    std::condition_variable cv_start_, cv_done_;
    const std::function<void(std::size_t)>* job_ = nullptr;
    std::size_t job_n_ = 0;
    std::uint64_t generation_ = 0;
    int pending_ = 0;
    bool stop_ = false;
};

inline int default_thread_count() {
    const unsigned hw = std::thread::hardware_concurrency();
    return static_cast<int>(hw == 0 ? 1 : std::min(hw, 8u));
}

// ---------------------------------------------------------------------------
// Row-major GEMM kernels, accumulate into C. Shapes are small on one side
// (channel counts) and long on the other (the flattened spatial plane), so
// simple register-blocked loops vectorize well.
// ---------------------------------------------------------------------------

constexpr std::size_t kGemmTile = 1024;  // keeps 4 accumulator rows L1-resident

// C[M x N] = or += A[M x K] * B[K x N]; Accumulate=false overwrites C on the
// first K pass so callers need not pre-zero the output.
template <bool Accumulate, typename T>
void gemm_nn(T* __restrict c, const T* __restrict a, const T* __restrict b,
             std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t j0 = 0; j0 < n; j0 += kGemmTile) {
        const std::size_t jn = std::min(kGemmTile, n - j0);
        std::size_t i = 0;
        for (; i + 4 <= m; i += 4) {
            for (std::size_t p = 0; p < k; ++p) {
                const T a0 = a[(i + 0) * k + p];
                const T a1 = a[(i + 1) * k + p];
                const T a2 = a[(i + 2) * k + p];
                const T a3 = a[(i + 3) * k + p];
                const T* __restrict brow = b + p * n + j0;
                T* __restrict c0 = c + (i + 0) * n + j0;
                T* __restrict c1 = c + (i + 1) * n + j0;
                T* __restrict c2 = c + (i + 2) * n + j0;
                T* __restrict c3 = c + (i + 3) * n + j0;
                if (!Accumulate && p == 0) {
                    for (std::size_t j = 0; j < jn; ++j) {
                        const T bj = brow[j];
                        c0[j] = a0 * bj;
                        c1[j] = a1 * bj;
                        c2[j] = a2 * bj;
                        c3[j] = a3 * bj;
                    }
                } else {
                    for (std::size_t j = 0; j < jn; ++j) {
                        const T bj = brow[j];
                        c0[j] += a0 * bj;
                        c1[j] += a1 * bj;
                        c2[j] += a2 * bj;
                        c3[j] += a3 * bj;
                    }
                }
            }
        }
        for (; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
                const T ai = a[i * k + p];
                const T* __restrict brow = b + p * n + j0;
                T* __restrict crow = c + i * n + j0;
                if (!Accumulate && p == 0) {
                    for (std::size_t j = 0; j < jn; ++j) crow[j] = ai * brow[j];
                } else {
                    for (std::size_t j = 0; j < jn; ++j) crow[j] += ai * brow[j];
                }
            }
        }
    }
}

template <typename T>
void gemm_nn_acc(T* c, const T* a, const T* b, std::size_t m, std::size_t k,
                 std::size_t n) {
    gemm_nn<true>(c, a, b, m, k, n);
}

template <typename T>
void gemm_nn_set(T* c, const T* a, const T* b, std::size_t m, std::size_t k,
                 std::size_t n) {
    gemm_nn<false>(c, a, b, m, k, n);
}

// Grows a scratch buffer without re-initializing contents the caller will
// fully overwrite.
template <typename T>
void ensure_size(std::vector<T>& v, std::size_t n) {
    if (v.size() != n) v.resize(n);
}

// dst[j] += sum_i partials[i*len + j]. Every output element is reduced in
// ascending sample order no matter how the chunks are scheduled.
template <typename T>
void reduce_sample_partials(T* dst, const T* partials, std::size_t n_samples,
                            std::size_t len, ThreadPool* pool) {
    constexpr std::size_t chunk = 4096;
    const std::size_t n_chunks = (len + chunk - 1) / chunk;
    auto work = [&](std::size_t ci) {
        const std::size_t lo = ci * chunk;
        const std::size_t hi = std::min(lo + chunk, len);
        for (std::size_t i = 0; i < n_samples; ++i) {
            const T* src = partials + i * len;
            for (std::size_t j = lo; j < hi; ++j) dst[j] += src[j];
        }
    };
    if (pool && n_chunks > 1)
        pool->parallel_for(n_chunks, work);
    else
        for (std::size_t ci = 0; ci < n_chunks; ++ci) work(ci);
}

// C[M x N] += A^T * B where A is [K x M]
template <typename T>
void gemm_tn_acc(T* __restrict c, const T* __restrict a, const T* __restrict b,
                 std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t j0 = 0; j0 < n; j0 += kGemmTile) {
        const std::size_t jn = std::min(kGemmTile, n - j0);
        std::size_t i = 0;
        for (; i + 4 <= m; i += 4) {
            for (std::size_t p = 0; p < k; ++p) {
                const T a0 = a[p * m + i + 0];
                const T a1 = a[p * m + i + 1];
                const T a2 = a[p * m + i + 2];
                const T a3 = a[p * m + i + 3];
                const T* __restrict brow = b + p * n + j0;
                T* __restrict c0 = c + (i + 0) * n + j0;
                T* __restrict c1 = c + (i + 1) * n + j0;
                T* __restrict c2 = c + (i + 2) * n + j0;
                T* __restrict c3 = c + (i + 3) * n + j0;
                for (std::size_t j = 0; j < jn; ++j) {
                    const T bj = brow[j];
                    c0[j] += a0 * bj;
                    c1[j] += a1 * bj;
                    c2[j] += a2 * bj;
                    c3[j] += a3 * bj;
                }
            }
        }
        for (; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
                const T ai = a[p * m + i];
                const T* __restrict brow = b + p * n + j0;
                T* __restrict crow = c + i * n + j0;
                for (std::size_t j = 0; j < jn; ++j) crow[j] += ai * brow[j];
            }
        }
    }
}

// Vectorized dot product. The SIMD reduction order is fixed by the build,
// so results are reproducible run to run.
template <typename T>
T dot_lanes(const T* __restrict a, const T* __restrict b, std::size_t k) {
    T s = 0;
#pragma omp simd reduction(+ : s)
    for (std::size_t p = 0; p < k; ++p) s += a[p] * b[p];
    return s;
}

// C[M x N] += A[M x K] * B^T where B is [N x K]
template <typename T>
void gemm_nt_acc(T* __restrict c, const T* __restrict a, const T* __restrict b,
                 std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* __restrict arow = a + i * k;
        for (std::size_t j = 0; j < n; ++j)
            c[i * n + j] += dot_lanes(arow, b + j * k, k);
    }
}

// Vectorized running sum and sum of squares in double.
template <typename T>
void sum_sumsq_lanes(const T* __restrict x, std::size_t n, double& sum_out,
                     double& sumsq_out) {
    double s = 0, q = 0;
#pragma omp simd reduction(+ : s, q)
    for (std::size_t p = 0; p < n; ++p) {
        const double v = x[p];
        s += v;
        q += v * v;
    }
    sum_out = s;
    sumsq_out = q;
}

}  // namespace clickdet
