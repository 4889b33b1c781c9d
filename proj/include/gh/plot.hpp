#pragma once

#include <ostream>
#include <span>

#include "gh/geometry.hpp"
#include "gh/numerics.hpp"

namespace gh {

/// Scatter plot of 2-D embeddings colored by label, with the optional
/// structure vertices drawn as rays. Other dimensions are unsupported.
void write_embedding_svg(std::ostream& out, const Matrix& embeddings, std::span<const int> labels,
                         const GeometricStructure* structure);

}  // namespace gh
