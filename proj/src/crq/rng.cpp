#include "crq/rng.hpp"
