import pytest

from zml_env import Env
from zml_learn import Checkpoint, Trainer
from zml_terrain import Terrain
from zml_util import Config


def stats(mxd, commanded_distance):
    return Env.EpisodeStats(False, mxd, 10.0, {}, [], commanded_distance=commanded_distance)


@pytest.mark.parametrize(
    "mxd,level",
    [(4.0, 3), (3.2, 3), (2.0, 2), (1.6, 2), (1.0, 1), (0.0, 1)],
)
def test_promote_and_demote(mxd, level):
    curriculum = Trainer.Curriculum(2, initial_level=2)
    # Four meters commanded: promote at 3.2 m, demote below 1.6 m
    assert curriculum.update(0, stats(mxd, 4.0)) == level
    assert curriculum.levels.tolist() == [level, 2]


def test_levels_stay_in_range():
    curriculum = Trainer.Curriculum(1, initial_level=0, max_level=1)
    assert curriculum.update(0, stats(0.0, 4.0)) == 0
    assert curriculum.update(0, stats(4.0, 4.0)) == 1
    assert curriculum.update(0, stats(4.0, 4.0)) == 1


def test_short_commands_leave_the_level():
    curriculum = Trainer.Curriculum(1, initial_level=5)
    assert curriculum.update(0, stats(0.0, 0.4)) == 5
    assert curriculum.update(0, stats(0.4, 0.4)) == 5


def test_disabled_curriculum():
    curriculum = Trainer.Curriculum(1, initial_level=5, enabled=False)
    assert curriculum.update(0, stats(4.0, 4.0)) == 5


def test_mean_level_and_state():
    curriculum = Trainer.Curriculum(4, initial_level=1)
    curriculum.update(0, stats(4.0, 4.0))
    assert curriculum.mean_level == pytest.approx(1.25)
    restored = Trainer.Curriculum(4)
    restored.load_state(curriculum.state())
    assert restored.levels.tolist() == [2, 1, 1, 1]


def test_load_state_clips_and_checks_the_size():
    curriculum = Trainer.Curriculum(2, max_level=3)
    curriculum.load_state({"levels": [7, -1]})
    assert curriculum.levels.tolist() == [3, 0]
    with pytest.raises(Checkpoint.CheckpointError, match="3 curriculum levels, run has 2"):
        curriculum.load_state({"levels": [0, 0, 0]})


def test_from_config():
    config = Config.load_run_config()
    curriculum = Trainer.Curriculum.from_config(
        8, config["terrain"], config["train"]["curriculum"]
    )
    assert len(curriculum.levels) == 8
    assert curriculum.max_level == config["terrain"]["max_level"]
    assert curriculum.max_level <= Terrain.MAX_LEVEL
    assert curriculum.promote_ratio == 0.8 and curriculum.demote_ratio == 0.4
