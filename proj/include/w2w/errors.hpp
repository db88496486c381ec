#pragma once

#include <stdexcept>
#include <string>

namespace w2w {

/// Base class for all domain errors raised by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// tensor-archive / adapter I/O
struct MalformedHeader : Error { using Error::Error; };
struct UnpairedTensor : Error { using Error::Error; };
struct RankMismatch : Error { using Error::Error; };
struct DtypeUnsupported : Error { using Error::Error; };
struct IoFailure : Error { using Error::Error; };
struct EmptyBundle : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };

// linalg
struct DegenerateMatrix : Error { using Error::Error; };
struct NotSymmetric : Error { using Error::Error; };
struct NotOrthonormal : Error { using Error::Error; };

// reduction / corpus
struct EmptySelection : Error { using Error::Error; };
struct NoMatchingLayers : Error { using Error::Error; };
struct HeterogeneousCorpus : Error { using Error::Error; };
struct LayoutMismatch : Error { using Error::Error; };

// w2w space
struct CorpusTooSmall : Error { using Error::Error; };
struct DimensionMismatch : Error { using Error::Error; };

// preference
struct TooFewItems : Error { using Error::Error; };
struct AllNoise : Error { using Error::Error; };
struct NoExamples : Error { using Error::Error; };
struct IdSetMismatch : Error { using Error::Error; };

// direction
struct SingleClass : Error { using Error::Error; };
struct SpaceMismatch : Error { using Error::Error; };

// synthetic
struct InvalidSpec : Error { using Error::Error; };

// embed client
struct EndpointError : Error { using Error::Error; };
struct DimensionDrift : Error { using Error::Error; };

}  // namespace w2w
