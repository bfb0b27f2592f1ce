from __future__ import annotations

import pytest

from pushblock.rates import homogeneous, make_rate_field

# rate fields reused across modules: homogeneous, two-step, mixed, with repeats
FIELDS = {
    "unit": homogeneous(1.0),
    "step": make_rate_field([1, 2], 1.0),
    "mixed": make_rate_field([1, 3, 2], 1.0),
    "zigzag": make_rate_field([1, 2, 1, 3], 1.0),
    "geometric": make_rate_field([1.0, 1.3, 1.69, 2.197, 2.8561], 0.7),
}


@pytest.fixture(params=sorted(FIELDS))
def field(request):
    return FIELDS[request.param]
