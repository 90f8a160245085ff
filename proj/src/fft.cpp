// FFTW backend for the grid transforms. Plans are created once per grid size
// with FFTW_ESTIMATE (deterministic plan choice) and executed through the
// new-array interface, which is safe to call concurrently.

#include <fftw3.h>

#include <malloc.h>

#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "qflow/error.hpp"
#include "qflow/grid.hpp"
#include "spectral.hpp"

namespace qflow {

namespace detail {

namespace {
// Field buffers are a few MB and are allocated and freed every solver
// iteration. glibc would serve each from a fresh mmap and pay the page faults
// again; keeping them on the heap lets freed blocks be reused.
bool tune_allocator() {
#ifdef __GLIBC__
    mallopt(M_MMAP_THRESHOLD, 512 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 1024 * 1024 * 1024);
#endif
    return true;
}
}  // namespace

void* aligned_alloc_bytes(std::size_t bytes) {
    static const bool tuned = tune_allocator();
    (void)tuned;
    return fftw_malloc(bytes == 0 ? 1 : bytes);
}
void aligned_free(void* p) noexcept { fftw_free(p); }
}  // namespace detail

namespace {

struct PlanPair {
    fftw_plan forward = nullptr;
    fftw_plan inverse = nullptr;
};

class PlanCache {
public:
    static PlanCache& instance() {
        static PlanCache cache;
        return cache;
    }

    PlanPair get(int n) {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = plans_.find(n);
        if (it != plans_.end()) return it->second;

        const int dims[4] = {n, n, n, n};
        const auto m = static_cast<std::size_t>(n);
        const std::size_t real_size = m * m * m * m;
        const std::size_t complex_size = m * m * m * (m / 2 + 1);
        double* r = fftw_alloc_real(real_size);
        fftw_complex* c = fftw_alloc_complex(complex_size);
        if (r == nullptr || c == nullptr) {
            fftw_free(r);
            fftw_free(c);
            throw std::bad_alloc();
        }
        PlanPair p;
        p.forward = fftw_plan_dft_r2c(4, dims, r, c, FFTW_ESTIMATE | FFTW_PRESERVE_INPUT);
        p.inverse = fftw_plan_dft_c2r(4, dims, c, r, FFTW_ESTIMATE | FFTW_DESTROY_INPUT);
        fftw_free(r);
        fftw_free(c);
        if (p.forward == nullptr || p.inverse == nullptr)
            throw NumericalError("fft", "could not create plans for n = " + std::to_string(n));
        plans_.emplace(n, p);
        return p;
    }

private:
    std::mutex mutex_;
    std::map<int, PlanPair> plans_;
};

}  // namespace

SpectralField forward_transform(const ScalarField& field) {
    const TorusGrid& g = field.grid();
    SpectralField out(g);
    const PlanPair plans = PlanCache::instance().get(g.n());
    // The plan preserves its input; FFTW's signature is just not const-correct.
    fftw_execute_dft_r2c(plans.forward, const_cast<double*>(field.values().data()),
                         reinterpret_cast<fftw_complex*>(out.data().data()));
    out *= 1.0 / static_cast<double>(g.total_points());
    return out;
}

ScalarField inverse_transform(const SpectralField& spectrum) {
    const double defect = spectrum.hermitian_defect();
    if (defect > 1e-12)
        throw InvalidArgument("inverse_transform: Hermitian symmetry violated (relative defect " +
                              std::to_string(defect) + ")");
    return detail::inverse_transform_trusted(spectrum);
}

ScalarField detail::inverse_transform_trusted(const SpectralField& spectrum) {
    const TorusGrid& g = spectrum.grid();
    AlignedVector<std::complex<double>> scratch(spectrum.data().begin(), spectrum.data().end());
    const PlanPair plans = PlanCache::instance().get(g.n());
    ScalarField out(g);
    fftw_execute_dft_c2r(plans.inverse, reinterpret_cast<fftw_complex*>(scratch.data()),
                         out.values().data());
    return out;
}

}  // namespace qflow
