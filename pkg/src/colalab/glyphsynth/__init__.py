"""Synthetic compositional glyph corpus and zero-shot splits."""

from .corpus import (Corpus, CorpusConfig, add_split, generate_corpus, read_corpus,
                     render_samples, write_corpus)
from .grammar import (GlyphSpec, Node, build_charset, document_frequency, serialize,
                      tree_capacity, tree_depth, tree_leaves)
from .primitives import PrimitiveBank, PrimitiveShape, make_primitive_bank
from .render import RenderStyle, render, render_templates, sample_style, template_styles
from .splits import (SplitManifest, make_character_zeroshot_split,
                     make_component_zeroshot_split, make_split, parse_split)

__all__ = [
    "Corpus", "CorpusConfig", "GlyphSpec", "Node", "PrimitiveBank", "PrimitiveShape",
    "RenderStyle", "SplitManifest", "add_split", "build_charset", "document_frequency",
    "generate_corpus", "make_character_zeroshot_split", "make_component_zeroshot_split",
    "make_primitive_bank", "make_split", "parse_split", "read_corpus", "render",
    "render_samples", "render_templates", "sample_style", "serialize", "template_styles",
    "tree_capacity", "tree_depth", "tree_leaves", "write_corpus",
]
