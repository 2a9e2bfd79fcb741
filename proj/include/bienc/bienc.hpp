#ifndef BIENC_BIENC_HPP
#define BIENC_BIENC_HPP

#include "bienc/common.hpp"
#include "bienc/corpus.hpp"
#include "bienc/bpe.hpp"
#include "bienc/templates.hpp"
#include "bienc/encoder.hpp"
#include "bienc/pooling.hpp"
#include "bienc/model.hpp"
#include "bienc/trainer.hpp"
#include "bienc/retrieval.hpp"
#include "bienc/evaluation.hpp"
#include "bienc/synthetic.hpp"
#include "bienc/pipeline.hpp"

#endif  // BIENC_BIENC_HPP
