// Packed, cache-blocked GEMM. Classic three-level blocking: B is packed into
// KC x NR panels shared by all threads, each thread packs its own MC x KC block
// of A into MR-row panels, and an MR x NR register tile does the work.
//
// Each C tile is owned by one thread and the K blocks are visited in order, so
// the result is bitwise independent of the number of threads.

#include <algorithm>
#include <cstring>
#include <memory>
#include <new>
#include <vector>

#include "pconet/kernels.hpp"

namespace pconet::parallel {
namespace {

template <typename T>
struct Blocking;

template <>
struct Blocking<float> {
    static constexpr std::size_t MR = 6, NR = 32, KC = 256, MC = 144, NC = 1024;
};
template <>
struct Blocking<double> {
    static constexpr std::size_t MR = 6, NR = 16, KC = 256, MC = 96, NC = 512;
};

typedef float VecF __attribute__((vector_size(64)));
typedef double VecD __attribute__((vector_size(64)));

template <typename T>
struct VecOf;
template <>
struct VecOf<float> {
    using type = VecF;
};
template <>
struct VecOf<double> {
    using type = VecD;
};

template <typename T>
struct AlignedBuffer {
    struct Free {
        void operator()(T* p) const { ::operator delete[](p, std::align_val_t{64}); }
    };
    std::unique_ptr<T[], Free> ptr;
    std::size_t capacity = 0;

    T* get(std::size_t n) {
        if (n > capacity) {
            ptr.reset(static_cast<T*>(::operator new[](n * sizeof(T), std::align_val_t{64})));
            capacity = n;
        }
        return ptr.get();
    }
};

template <typename T>
void pack_a(bool trans, const T* a, std::size_t lda, std::size_t i0, std::size_t mc, std::size_t p0,
            std::size_t kc, T* out) {
    constexpr std::size_t MR = Blocking<T>::MR;
    for (std::size_t ir = 0; ir < mc; ir += MR) {
        const std::size_t mr = std::min(MR, mc - ir);
        for (std::size_t p = 0; p < kc; ++p) {
            for (std::size_t i = 0; i < mr; ++i) {
                const std::size_t row = i0 + ir + i, col = p0 + p;
                out[i] = trans ? a[col * lda + row] : a[row * lda + col];
            }
            for (std::size_t i = mr; i < MR; ++i) out[i] = T{0};
            out += MR;
        }
    }
}

template <typename T>
void pack_b_panel(bool trans, const T* b, std::size_t ldb, std::size_t p0, std::size_t kc, std::size_t j0,
                  std::size_t nr, T* out) {
    constexpr std::size_t NR = Blocking<T>::NR;
    for (std::size_t p = 0; p < kc; ++p) {
        const std::size_t row = p0 + p;
        if (!trans && nr == NR) {
            std::memcpy(out, b + row * ldb + j0, NR * sizeof(T));
        } else {
            for (std::size_t j = 0; j < nr; ++j) out[j] = trans ? b[(j0 + j) * ldb + row] : b[row * ldb + j0 + j];
            for (std::size_t j = nr; j < NR; ++j) out[j] = T{0};
        }
        out += NR;
    }
}

template <typename T>
void micro_kernel(std::size_t kc, const T* __restrict ap, const T* __restrict bp, T* c, std::size_t ldc,
                  std::size_t mr, std::size_t nr, bool overwrite) {
    constexpr std::size_t MR = Blocking<T>::MR, NR = Blocking<T>::NR;
    constexpr std::size_t W = 64 / sizeof(T);
    static_assert(NR == 2 * W);
    using V = typename VecOf<T>::type;

    V acc[MR][2] = {};
    for (std::size_t p = 0; p < kc; ++p) {
        V b0, b1;
        std::memcpy(&b0, bp, sizeof(V));
        std::memcpy(&b1, bp + W, sizeof(V));
        for (std::size_t i = 0; i < MR; ++i) {
            const T ai = ap[i];
            acc[i][0] += ai * b0;
            acc[i][1] += ai * b1;
        }
        ap += MR;
        bp += NR;
    }

    alignas(64) T tile[MR][NR];
    for (std::size_t i = 0; i < MR; ++i) {
        std::memcpy(&tile[i][0], &acc[i][0], sizeof(V));
        std::memcpy(&tile[i][W], &acc[i][1], sizeof(V));
    }
    for (std::size_t i = 0; i < mr; ++i) {
        T* row = c + i * ldc;
        if (overwrite)
            for (std::size_t j = 0; j < nr; ++j) row[j] = tile[i][j];
        else
            for (std::size_t j = 0; j < nr; ++j) row[j] += tile[i][j];
    }
}

}  // namespace

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
          const T* b, std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
    using B = Blocking<T>;
    if (m == 0 || n == 0) return;
    if (k == 0) {
        if (!accumulate)
            for (std::size_t i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, T{0});
        return;
    }

    AlignedBuffer<T> bbuf;
    for (std::size_t jc = 0; jc < n; jc += B::NC) {
        const std::size_t nc = std::min(B::NC, n - jc);
        const std::size_t panels = (nc + B::NR - 1) / B::NR;
        for (std::size_t pc = 0; pc < k; pc += B::KC) {
            const std::size_t kc = std::min(B::KC, k - pc);
            const bool overwrite = !accumulate && pc == 0;
            T* bp = bbuf.get(panels * B::NR * kc);

#pragma omp parallel for schedule(static)
            for (std::size_t jp = 0; jp < panels; ++jp) {
                const std::size_t j0 = jp * B::NR;
                pack_b_panel(trans_b, b, ldb, pc, kc, jc + j0, std::min(B::NR, nc - j0), bp + jp * B::NR * kc);
            }

            const std::size_t mblocks = (m + B::MC - 1) / B::MC;
#pragma omp parallel
            {
                AlignedBuffer<T> abuf;
#pragma omp for schedule(static)
                for (std::size_t mb = 0; mb < mblocks; ++mb) {
                    const std::size_t ic = mb * B::MC;
                    const std::size_t mc = std::min(B::MC, m - ic);
                    T* ap = abuf.get(((mc + B::MR - 1) / B::MR) * B::MR * kc);
                    pack_a(trans_a, a, lda, ic, mc, pc, kc, ap);
                    for (std::size_t jp = 0; jp < panels; ++jp) {
                        const std::size_t j0 = jp * B::NR;
                        const std::size_t nr = std::min(B::NR, nc - j0);
                        for (std::size_t ir = 0; ir < mc; ir += B::MR) {
                            micro_kernel(kc, ap + ir * kc, bp + jp * B::NR * kc, c + (ic + ir) * ldc + jc + j0, ldc,
                                         std::min(B::MR, mc - ir), nr, overwrite);
                        }
                    }
                }
            }
        }
    }
}

template void gemm<float>(bool, bool, std::size_t, std::size_t, std::size_t, const float*, std::size_t, const float*,
                          std::size_t, float*, std::size_t, bool);
template void gemm<double>(bool, bool, std::size_t, std::size_t, std::size_t, const double*, std::size_t,
                           const double*, std::size_t, double*, std::size_t, bool);

}  // namespace pconet::parallel
