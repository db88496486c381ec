#pragma once

#include "w2w/adapter.hpp"
#include "w2w/archive.hpp"
#include "w2w/direction.hpp"
#include "w2w/embed_client.hpp"
#include "w2w/errors.hpp"
#include "w2w/linalg.hpp"
#include "w2w/matrix.hpp"
#include "w2w/preference.hpp"
#include "w2w/reduction.hpp"
#include "w2w/space.hpp"
#include "w2w/synth.hpp"
