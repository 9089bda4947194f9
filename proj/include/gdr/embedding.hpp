#ifndef GDR_EMBEDDING_HPP
#define GDR_EMBEDDING_HPP

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace gdr {

/**
 * Low-dimensional coordinates plus the momentum and gains buffers used by the
 * batched optimizer. All three buffers are n x dim, row-major.
 */
struct EmbeddingState {
    std::size_t n = 0;
    std::size_t dim = 2;
    std::vector<double> coords;
    std::vector<double> velocity;
    std::vector<double> gains;
    std::size_t epoch = 0;

    EmbeddingState() = default;

    EmbeddingState(std::size_t n_, std::size_t dim_)
        : n(n_), dim(dim_), coords(n_ * dim_, 0.0), velocity(n_ * dim_, 0.0), gains(n_ * dim_, 1.0) {
        if (dim_ < 1 || dim_ > 3) {
            throw std::invalid_argument("embedding dimension must be 1, 2 or 3");
        }
    }

    std::span<const double> point(std::size_t i) const {
        return std::span<const double>(coords.data() + i * dim, dim);
    }

    std::span<double> point(std::size_t i) {
        return std::span<double>(coords.data() + i * dim, dim);
    }

    bool finite() const {
        for (double v : coords) {
            if (!std::isfinite(v)) {
                return false;
            }
        }
        return true;
    }
};

}

#endif
