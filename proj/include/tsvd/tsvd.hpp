#pragma once

#include "tsvd/comm.hpp"
#include "tsvd/dense_matrix.hpp"
#include "tsvd/dist_matrix.hpp"
#include "tsvd/errors.hpp"
#include "tsvd/linalg.hpp"
#include "tsvd/matrix_io.hpp"
#include "tsvd/pca.hpp"
#include "tsvd/random.hpp"
#include "tsvd/svd.hpp"
#include "tsvd/synthetic.hpp"
