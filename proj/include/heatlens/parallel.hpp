#pragma once

#include <atomic>
#include <cstdlib>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace heatlens {

// Worker count: HEATLENS_THREADS env var if set, else hardware concurrency.
inline int default_threads() {
    if (const char* env = std::getenv("HEATLENS_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) return n;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? int(hc) : 1;
}

// Runs fn(begin, end) over fixed chunks of [0, n). Chunk boundaries depend
// only on n and grain, never on the worker count, and each chunk writes its
// own output range, so results are bit-identical for any thread count.
inline void parallel_for(size_t n, size_t grain,
                         const std::function<void(size_t, size_t)>& fn,
                         int threads = 0) {
    if (n == 0) return;
    if (grain == 0) grain = 1;
    size_t chunks = (n + grain - 1) / grain;
    if (threads <= 0) threads = default_threads();
    size_t workers = std::min<size_t>(size_t(threads), chunks);
    if (workers <= 1) {
        for (size_t c = 0; c < chunks; ++c)
            fn(c * grain, std::min(n, (c + 1) * grain));
        return;
    }
    std::atomic<size_t> next{0};
    std::exception_ptr err;
    std::atomic<bool> failed{false};
    auto run = [&]() {
        for (;;) {
            size_t c = next.fetch_add(1);
            if (c >= chunks || failed.load()) return;
            try {
                fn(c * grain, std::min(n, (c + 1) * grain));
            } catch (...) {
                if (!failed.exchange(true)) err = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    for (size_t w = 0; w < workers; ++w) pool.emplace_back(run);
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

// Map-reduce with a deterministic combine order: per-chunk partials are
// stored by chunk index and folded sequentially.
template <typename T>
T parallel_reduce(size_t n, size_t grain,
                  const std::function<T(size_t, size_t)>& map_chunk,
                  const std::function<T(T, T)>& combine, T init,
                  int threads = 0) {
    if (n == 0) return init;
    if (grain == 0) grain = 1;
    size_t chunks = (n + grain - 1) / grain;
    std::vector<T> partial(chunks);
    parallel_for(n, grain, [&](size_t b, size_t e) {
        partial[b / grain] = map_chunk(b, e);
    }, threads);
    T acc = init;
    for (size_t c = 0; c < chunks; ++c) acc = combine(acc, partial[c]);
    return acc;
}

} // namespace heatlens
