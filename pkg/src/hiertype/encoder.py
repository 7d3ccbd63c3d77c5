"""Mention encoder: word+position token rows, CNN context vector, surface
average, and the final two-layer combination, plus the complex projection
used by Hermitian scoring.

The second MLP layer is affine with no outer nonlinearity. Dropout applies
to the encoder output at training time only. Word vectors are frozen, so
only position rows receive gradient through the token matrix.
"""

from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .corpus import position_features
from .errors import ShapeError


def glorot(rng, shape):
    """Glorot-uniform init; vectors are treated as single-row matrices."""
    fan_out, fan_in = (shape if len(shape) == 2 else
                       (shape[0] * shape[1], shape[2]) if len(shape) == 3 else
                       (1, shape[0]))
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return nc.Tensor(rng.uniform(-limit, limit, size=shape), requires_grad=True)


@dataclass(eq=False)
class EncoderParams:
    pos_table: nc.Tensor          # (2*s_max+1, d_p)
    conv_w: nc.Tensor             # (w, d, d_w+d_p)
    conv_b: nc.Tensor             # (d,)
    w1: nc.Tensor                 # (d, d_w+d)
    b1: nc.Tensor
    w2: nc.Tensor                 # (d, d)
    b2: nc.Tensor
    w_real: nc.Tensor | None = None
    b_real: nc.Tensor | None = None
    w_imag: nc.Tensor | None = None
    b_imag: nc.Tensor | None = None
    s_max: int = 50

    @property
    def has_complex(self):
        return self.w_real is not None

    def named(self, prefix="enc"):
        out = {f"{prefix}.pos_table": self.pos_table,
               f"{prefix}.conv_w": self.conv_w,
               f"{prefix}.conv_b": self.conv_b,
               f"{prefix}.w1": self.w1, f"{prefix}.b1": self.b1,
               f"{prefix}.w2": self.w2, f"{prefix}.b2": self.b2}
        if self.has_complex:
            out.update({f"{prefix}.w_real": self.w_real,
                        f"{prefix}.b_real": self.b_real,
                        f"{prefix}.w_imag": self.w_imag,
                        f"{prefix}.b_imag": self.b_imag})
        return out


@dataclass(eq=False)
class MentionVector:
    real: nc.Tensor               # m_F, or its real projection
    imag: nc.Tensor | None = None  # present only for complex variants


def init_encoder_params(rng, d_w=300, d_p=25, d=300, conv_width=5, s_max=50,
                        complex_proj=False):
    d_in = d_w + d_p
    zeros = lambda n: nc.Tensor(np.zeros(n), requires_grad=True)
    params = EncoderParams(
        pos_table=glorot(rng, (2 * s_max + 1, d_p)),
        conv_w=glorot(rng, (conv_width, d, d_in)),
        conv_b=zeros(d),
        w1=glorot(rng, (d, d_w + d)),
        b1=zeros(d),
        w2=glorot(rng, (d, d)),
        b2=zeros(d),
        s_max=s_max,
    )
    if complex_proj:
        params.w_real = glorot(rng, (d, d))
        params.b_real = zeros(d)
        params.w_imag = glorot(rng, (d, d))
        params.b_imag = zeros(d)
    return params


def embed_tokens(mention, emb, params):
    """Token matrix M: frozen word vector concat learned position vector."""
    words = nc.Tensor(emb.rows(mention.tokens))  # constant, no grad
    pos = position_features(len(mention.tokens), mention.span, clip=params.s_max)
    pos_rows = nc.gather_rows(params.pos_table, pos + params.s_max)
    return nc.concat([words, pos_rows], axis=1)


def encode_context(M, params):
    """Context vector: conv+tanh over the token matrix, max pooled in time."""
    return nc.maxpool_time(nc.conv1d_tanh(M, params.conv_w, params.conv_b))


def surface_average(mention, emb):
    """Mean of the in-span word vectors; frozen, so a constant tensor."""
    start, end = mention.span
    return nc.Tensor(emb.rows(mention.tokens[start:end]).mean(axis=0))


def encode_mention(mention, emb, params, training=False, dropout_keep=1.0,
                   rng=None, complex_proj=False):
    """Full encoder: m_F = W2 tanh(W1 [m_G ; m_CNN] + b1) + b2."""
    m_cnn = encode_context(embed_tokens(mention, emb, params), params)
    m_g = surface_average(mention, emb)
    hidden = nc.tanh(nc.matmul(params.w1, nc.concat([m_g, m_cnn])) + params.b1)
    m_f = nc.matmul(params.w2, hidden) + params.b2
    if training and dropout_keep < 1.0:
        if rng is None:
            raise ValueError("dropout during training needs an rng")
        m_f = nc.dropout(m_f, dropout_keep, rng, training=True)
    v = MentionVector(real=m_f)
    return project_complex(v, params) if complex_proj else v


def project_complex(v, params):
    """Affine real and imaginary components of the mention vector."""
    if not params.has_complex:
        raise ShapeError("encoder has no complex projection parameters")
    return MentionVector(
        real=nc.matmul(params.w_real, v.real) + params.b_real,
        imag=nc.matmul(params.w_imag, v.real) + params.b_imag,
    )
