"""Hand-written task programs in the clause-program format.

These are the white-box policies each task is known to admit; they double as
evaluation baselines and as the warm-start source for reuse experiments run
from program files rather than checkpoints.
"""
from __future__ import annotations

from .programs import ExtractedProgram, parse

DOORKEY = """\
# galois program
# task: doorkey
# source: hand

gt_key :- !has_key(X), is_agent(X), has_key(Y), is_env(Y).
gt_door :- has_key(X), is_agent(X), !is_open(Y), is_door(Y).
gt_goal :- has_key(X), is_agent(X), is_open(Y), is_door(Y).

go_east :- pos(x).
go_west :- neg(x).
go_south :- pos(y).
go_north :- neg(y).

pick :- at(X), is_key(X), !has_key(Y), is_agent(Y).
toggle :- at(X), is_door(X), has_key(Y), is_agent(Y).
"""

BOXKEY = """\
# galois program
# task: boxkey
# source: hand

gt_box :- !has_key(X), is_agent(X), !has_key(Y), is_env(Y).
gt_key :- !has_key(X), is_agent(X), has_key(Y), is_env(Y).
gt_door :- has_key(X), is_agent(X), !is_open(Y), is_door(Y).
gt_goal :- has_key(X), is_agent(X), is_open(Y), is_door(Y).

go_east :- pos(x).
go_west :- neg(x).
go_south :- pos(y).
go_north :- neg(y).

pick :- at(X), is_key(X), !has_key(Y), is_agent(Y).
toggle :- at(X), is_box(X), !has_key(Y), is_agent(Y).
toggle :- at(X), is_door(X), has_key(Y), is_agent(Y).
"""

UNLOCKPICKUP = """\
# galois program
# task: unlockpickup
# source: hand

gt_key :- !has_key(X), is_agent(X), has_key(Y), is_env(Y).
gt_door :- has_key(X), is_agent(X), !is_open(Y), is_door(Y).
drop_key :- has_key(X), is_agent(X), is_open(Y), is_door(Y).
gt_box :- !has_key(X), is_agent(X), is_open(Y), is_door(Y).

go_east :- pos(x).
go_west :- neg(x).
go_south :- pos(y).
go_north :- neg(y).

pick :- at(X), is_key(X), !has_key(Y), is_agent(Y).
pick :- at(X), is_box(X), !has_key(Y), is_agent(Y).
toggle :- at(X), is_door(X), has_key(Y), is_agent(Y).
drop :- at(spot), has_key(Y), is_agent(Y).
"""

MULTIROOM = """\
# galois program
# task: multiroom

# source: hand

gt_red :- reachable(X), is_red(X), !is_open(X).
gt_yellow :- reachable(X), is_yellow(X), !is_open(X).
gt_blue :- reachable(X), is_blue(X), !is_open(X).
gt_goal :- reachable(X), is_goal(X).

go_east :- pos(x).
go_west :- neg(x).
go_south :- pos(y).
go_north :- neg(y).

toggle :- at(door), is_door(door).
"""

PROGRAM_TEXT = {
    "doorkey": DOORKEY,
    "boxkey": BOXKEY,
    "unlockpickup": UNLOCKPICKUP,
    "multiroom": MULTIROOM,
}


def reference_program(task: str) -> ExtractedProgram:
    """The built-in program for a task (sem-mod variants use the base one)."""
    root = task.replace("-semmod", "")
    return parse(PROGRAM_TEXT[root])
