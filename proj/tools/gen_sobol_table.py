#!/usr/bin/env python3
"""Emit include/losslens/detail/sobol_table.hpp from the Joe-Kuo
new-joe-kuo-6.21201 direction numbers shipped with scipy."""
import sys
from pathlib import Path

import numpy as np
import scipy

MAX_DIM = int(sys.argv[1]) if len(sys.argv) > 1 else 1111

src = Path(scipy.__file__).parent / "stats" / "_sobol_direction_numbers.npz"
table = np.load(src)
poly, vinit = table["poly"], table["vinit"]

out = Path(__file__).resolve().parents[1] / "include/losslens/detail/sobol_table.hpp"
lines = [
    "// Generated by tools/gen_sobol_table.py; do not edit.",
    "// Joe & Kuo direction numbers (new-joe-kuo-6.21201), first "
    f"{MAX_DIM} dimensions.",
    "#pragma once",
    "",
    "#include <array>",
    "#include <cstddef>",
    "#include <cstdint>",
    "",
    "namespace losslens::detail {",
    "",
    "struct SobolPrimitive {",
    "  std::uint32_t poly;           // primitive polynomial incl. leading and trailing bit",
    "  std::array<std::uint32_t, 18> m;  // initial direction integers, zero padded",
    "};",
    "",
    f"inline constexpr std::size_t kSobolMaxDim = {MAX_DIM};",
    "",
    f"inline constexpr std::array<SobolPrimitive, {MAX_DIM}> kSobolTable{{{{",
]
for d in range(MAX_DIM):
    m = ", ".join(str(int(v)) for v in vinit[d])
    lines.append(f"    {{{int(poly[d])}u, {{{m}}}}},")
lines += ["}};", "", "}  // namespace losslens::detail", ""]
out.write_text("\n".join(lines))
print(f"wrote {out}")
