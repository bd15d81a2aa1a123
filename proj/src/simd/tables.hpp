#pragma once

#include "aurum/simd/kernels.hpp"

namespace aurum::simd::detail {

extern const KernelTable kScalarTable;
#if defined(AURUM_HAVE_AVX2_KERNELS)
extern const KernelTable kAvx2Table;
#endif

}  // namespace aurum::simd::detail
