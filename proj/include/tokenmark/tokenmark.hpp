#pragma once

#include "tokenmark/attacks.hpp"
#include "tokenmark/basis.hpp"
#include "tokenmark/bytes.hpp"
#include "tokenmark/corpus.hpp"
#include "tokenmark/error.hpp"
#include "tokenmark/eval.hpp"
#include "tokenmark/extract.hpp"
#include "tokenmark/generate.hpp"
#include "tokenmark/keying.hpp"
#include "tokenmark/manifest.hpp"
#include "tokenmark/parallel.hpp"
#include "tokenmark/params.hpp"
#include "tokenmark/permutation.hpp"
#include "tokenmark/perturb.hpp"
#include "tokenmark/provider.hpp"
#include "tokenmark/remote.hpp"
#include "tokenmark/rng.hpp"
#include "tokenmark/scan.hpp"
#include "tokenmark/types.hpp"
#include "tokenmark/verify.hpp"
#include "tokenmark/version.hpp"
#include "tokenmark/vocab.hpp"
