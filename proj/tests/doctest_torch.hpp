#pragma once

// c10 logging defines a CHECK macro of its own; the test macros take over.
#include <torch/torch.h>
#undef CHECK
#include <doctest.h>
