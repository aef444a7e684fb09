import pytest

from selfspec.config import ConfigError, load, with_overrides


def cfg(tmp_path, body):
    p = tmp_path / "c.toml"
    p.write_text(body)
    return p


MIN = '[decode]\nblock_size = 4\n[run]\nprompts = [[1, 2]]\n'


class TestLoad:
    def test_defaults(self, tmp_path):
        exp, sweep = load(cfg(tmp_path, MIN))
        assert exp.decode.block_size == 4 and exp.sampler == "s2d2"
        assert exp.prompts == [[1, 2]] and sweep["n_sequences"] == 4

    def test_seed_override(self, tmp_path):
        exp, _ = load(cfg(tmp_path, MIN), seed_override=17)
        assert exp.seed == 17

    def test_prompts_file(self, tmp_path):
        (tmp_path / "p.txt").write_text("1 2 3\n\n4 5\n")
        exp, _ = load(cfg(tmp_path, '[decode]\nblock_size = 2\n[run]\nprompts_file = "p.txt"\n'))
        assert exp.prompts == [[1, 2, 3], [4, 5]]

    def test_missing_required(self, tmp_path):
        with pytest.raises(ConfigError, match="decode.block_size"):
            load(cfg(tmp_path, '[run]\nprompts = [[1]]\n'))

    def test_unknown_section(self, tmp_path):
        with pytest.raises(ConfigError, match="polcy"):
            load(cfg(tmp_path, MIN + '[polcy]\nkind = "min_span"\n'))

    def test_wrong_type_reports_line(self, tmp_path):
        with pytest.raises(ConfigError, match=r":2: .*decode.block_size"):
            load(cfg(tmp_path, '[decode]\nblock_size = "four"\n[run]\nprompts = [[1]]\n'))

    @pytest.mark.parametrize("body", [
        '[policy]\nh_init = "maybe"\n',
        '[policy]\nkind = "always"\n',
        '[decode]\nsampler = "greedy"\n',
    ])
    def test_bad_values(self, tmp_path, body):
        text = MIN.replace("[decode]\nblock_size = 4\n", "") + body
        if "[decode]" not in body:
            text += "[decode]\nblock_size = 4\n"
        else:
            text = text.replace("[decode]\n", "[decode]\nblock_size = 4\n")
        with pytest.raises(ConfigError):
            load(cfg(tmp_path, text))

    def test_bad_toml(self, tmp_path):
        with pytest.raises(ConfigError):
            load(cfg(tmp_path, "[decode\n"))

    def test_overrides(self, tmp_path):
        path = cfg(tmp_path, MIN)
        exp, _ = load(path)
        new = with_overrides(str(path), exp, {"decode.block_size": 8, "policy.tau_span": 3})
        assert new.decode.block_size == 8 and new.routing_state().tau_span == 3
        assert exp.decode.block_size == 4
