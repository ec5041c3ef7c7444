import numpy as np
import pytest

import numlm.autodiff as ad
from numlm.autodiff import Tensor
from numlm.compute import ParamStore, gradient_check
from numlm.embed import (CHAR_INDEX, CHARS, N_CHARS, N_EMIT, CharEncoder,
                         EmbeddingTable, GatedInputEmbed)


def test_char_inventory():
    assert N_CHARS == 13
    assert N_EMIT == 12
    assert set("0123456789.") < set(CHARS)
    assert len(CHAR_INDEX) == 13


class TestEmbeddingTable:
    def make(self, n=5, dim=4, seed=0):
        params = ParamStore()
        return params, EmbeddingTable(params, "E", n, dim,
                                      np.random.default_rng(seed))

    def test_index_selects_row(self):
        params, table = self.make()
        for i in range(5):
            np.testing.assert_array_equal(table(i).value, table.E.value[i])

    def test_rows_independent(self):
        params, table = self.make()
        before = table.E.value[1].copy()
        table.E.value[0] += 100.0
        np.testing.assert_array_equal(table.E.value[1], before)

    def test_out_of_range_rejected(self):
        params, table = self.make()
        with pytest.raises(IndexError):
            table(5)

    def test_load_pretrained_fixture(self, tmp_path):
        params, table = self.make(n=3, dim=4)
        path = tmp_path / "vectors.txt"
        path.write_text("the 1.0 2.0 3.0 4.0\n"
                        "cat -1.0 0.0 0.5 0.25\n"
                        "unrelated 9.0 9.0 9.0 9.0\n")
        hits = table.load_pretrained(str(path), ["the", "dog", "cat"])
        assert hits == 2
        np.testing.assert_array_equal(table.E.value[0], [1.0, 2.0, 3.0, 4.0])
        np.testing.assert_array_equal(table.E.value[2], [-1.0, 0.0, 0.5, 0.25])

    def test_load_pretrained_dim_mismatch(self, tmp_path):
        params, table = self.make(n=2, dim=4)
        path = tmp_path / "vectors.txt"
        path.write_text("the 1.0 2.0\n")
        with pytest.raises(ValueError):
            table.load_pretrained(str(path), ["the"])


class TestCharEncoder:
    def make(self, dim=4, seed=0):
        params = ParamStore()
        return params, CharEncoder(params, "enc", dim, np.random.default_rng(seed))

    def test_zero_weights_zero_output(self):
        params, enc = self.make()
        for name, t in params.items():
            t.value[:] = 0.0
        np.testing.assert_array_equal(enc("12.5").value, np.zeros(4))

    def test_order_sensitive(self):
        params, enc = self.make(seed=3)
        assert not np.allclose(enc("12").value, enc("21").value)

    def test_unknown_character_rejected(self):
        params, enc = self.make()
        with pytest.raises(ValueError):
            enc("1a2")

    def test_gradient_flows(self):
        params, enc = self.make(dim=3, seed=5)
        err = gradient_check(lambda: ad.tsum(enc("3.5") * enc("3.5")), params)
        assert err < 1e-4


class TestGatedInputEmbed:
    def make(self, dim=4, seed=0):
        params = ParamStore()
        return params, GatedInputEmbed(params, "gate", dim,
                                       np.random.default_rng(seed))

    def test_saturated_gate_returns_token(self):
        params, gate = self.make()
        gate.Wg.value[:] = 0.0
        gate.bg.value[:] = 1e3
        tok, ch = Tensor(np.arange(4.0)), Tensor(-np.ones(4))
        np.testing.assert_allclose(gate(tok, ch).value, tok.value, atol=1e-12)

    def test_closed_gate_returns_char(self):
        params, gate = self.make()
        gate.Wg.value[:] = 0.0
        gate.bg.value[:] = -1e3
        tok, ch = Tensor(np.arange(4.0)), Tensor(-np.ones(4))
        np.testing.assert_allclose(gate(tok, ch).value, ch.value, atol=1e-12)

    def test_zero_gate_params_average(self):
        params, gate = self.make()
        gate.Wg.value[:] = 0.0
        gate.bg.value[:] = 0.0
        tok, ch = Tensor(np.arange(4.0)), Tensor(np.ones(4))
        np.testing.assert_allclose(gate(tok, ch).value,
                                   (tok.value + ch.value) / 2, atol=1e-15)

    def test_gradient_reaches_both_paths(self):
        params = ParamStore()
        rng = np.random.default_rng(2)
        table = EmbeddingTable(params, "tok", 3, 4, rng)
        enc = CharEncoder(params, "char", 4, rng)
        gate = GatedInputEmbed(params, "gate", 4, rng)

        def loss():
            e = gate(table(1), enc("60.5"))
            return ad.tsum(e * e)

        assert gradient_check(loss, params) < 1e-4
        params.zero_grad()
        loss().backward()
        assert np.any(params["tok"].grad[1] != 0.0)
        assert np.any(params["char.chars"].grad != 0.0)
