#!/usr/bin/env python3
"""Writes the scripted transcripts used by the tests.

    python3 make_transcripts.py            # rewrite *.jsonl
    python3 make_transcripts.py --golden   # print sha256 of final file bodies
"""

import hashlib
import json
import sys
from pathlib import Path

HERE = Path(__file__).resolve().parent


def response(thinking, output, artifacts=(), verdict=None, actions=None):
    out = [f"<thinking>\n{thinking}\n</thinking>", "<output>", output]
    for path, body in artifacts:
        out.append(f"```python\n# FILE: {path}\n{body}```")
    if verdict:
        out.append(f"VERDICT: {verdict}")
    out.append("</output>")
    if actions:
        out.append(f"<document_action>\n{json.dumps(actions, indent=1)}\n</document_action>")
    return "\n".join(out) + "\n"


def record(layer, role, task, text=None, error=None):
    r = {"layer": layer, "role": role, "task": task, "request_sha256": None, "response": text or ""}
    if error:
        r["error"] = error
    return r


def add(section, content):
    return {"type": "add", "section": section, "content": content}


def update(section, content):
    return {"type": "update", "section": section, "content": content}


def worker(layer, path, body, note="Implemented the file as contracted."):
    return record(layer, "worker", path, response(f"Writing {path} against the contract.", note, [(path, body)]))


def critic(layer, path, verdict):
    return record(layer, "critic", path, response(f"Reviewing {path}.", "Checked names, signatures and logic.", verdict=verdict))


# ---------------------------------------------------------------- gomoku

GOMOKU_API = """\
- **File:** `core/board.py`
  - **Owner:** Backend Engineer
  - **Version:** 1
  - **Status:** TODO
  - **Class:** `Board`
    - **Attribute:** `size: int` - Number of rows and columns.
    - **Attribute:** `grid: list` - Rows of cells; 0 empty, 1 black, 2 white.
    - **Method:** `def place(row: int, col: int, stone: int) -> bool` - Put a stone on an empty cell.
    - **Method:** `def is_full() -> bool` - True when no empty cell is left.
    - **Method:** `def wins(row: int, col: int) -> bool` - True when the stone at the cell completes five in a row.
- **File:** `ai/engine.py`
  - **Owner:** Algorithm Engineer
  - **Version:** 1
  - **Status:** TODO
  - **Class:** `AIPlayer`
    - **Attribute:** `stone: int` - Stone colour the AI plays.
    - **Method:** `def choose_move(board: Board) -> tuple` - Pick the best cell by a line-score heuristic.
- **File:** `core/game.py`
  - **Owner:** Backend Engineer
  - **Version:** 1
  - **Status:** TODO
  - **Class:** `Game`
    - **Attribute:** `board: Board` - The playing field.
    - **Attribute:** `ai: AIPlayer` - The computer opponent.
    - **Attribute:** `winner: int` - 0 while the game is running.
    - **Method:** `def play(row: int, col: int) -> bool` - Human move; False when illegal.
    - **Method:** `def ai_turn() -> tuple` - Let the AI answer and return its move.
- **File:** `main.py`
  - **Owner:** Frontend Engineer
  - **Version:** 1
  - **Status:** TODO
  - **Function:** `def main() -> None`"""

GOMOKU_API_FIXED = GOMOKU_API.replace(
    "  - **Function:** `def main() -> None`",
    "  - **Function:** `def main() -> None` - Console loop: read a move, answer with the AI, announce the winner.",
)

GOMOKU_DEPS = """\
```mermaid
graph TD
    main.py --> core/game.py
    core/game.py --> core/board.py
    core/game.py --> ai/engine.py
    ai/engine.py --> core/board.py
```"""

BOARD = '''\
class Board:
    """Square Gomoku board."""

    def __init__(self, size: int = 15) -> None:
        self.size = size
        self.grid = [[0] * size for _ in range(size)]

    def place(self, row: int, col: int, stone: int) -> bool:
        if not (0 <= row < self.size and 0 <= col < self.size):
            return False
        if self.grid[row][col] != 0:
            return False
        self.grid[row][col] = stone
        return True

    def is_full(self) -> bool:
        return all(cell != 0 for line in self.grid for cell in line)

    def wins(self, row: int, col: int) -> bool:
        stone = self.grid[row][col]
        if stone == 0:
            return False
        for dr, dc in ((0, 1), (1, 0), (1, 1), (1, -1)):
            count = 1
            for sign in (1, -1):
                r, c = row + sign * dr, col + sign * dc
                while 0 <= r < self.size and 0 <= c < self.size and self.grid[r][c] == stone:
                    count += 1
                    r += sign * dr
                    c += sign * dc
            if count >= 5:
                return True
        return False
'''

ENGINE = '''\
from core.board import Board


class AIPlayer:
    """Greedy opponent scoring every empty cell."""

    def __init__(self, stone: int = 2) -> None:
        self.stone = stone

    def choose_move(self, board: Board) -> tuple:
        best, best_score = None, -1
        for row in range(board.size):
            for col in range(board.size):
                if board.grid[row][col] != 0:
                    continue
                score = _score(board, row, col, self.stone) * 2 + _score(board, row, col, 3 - self.stone)
                if score > best_score:
                    best, best_score = (row, col), score
        return best


def _score(board: Board, row: int, col: int, stone: int) -> int:
    total = 0
    for dr, dc in ((0, 1), (1, 0), (1, 1), (1, -1)):
        run = 0
        for sign in (1, -1):
            r, c = row + sign * dr, col + sign * dc
            while 0 <= r < board.size and 0 <= c < board.size and board.grid[r][c] == stone:
                run += 1
                r += sign * dr
                c += sign * dc
        total += run * run
    return total
'''

GAME = '''\
from ai.engine import AIPlayer
from core.board import Board

HUMAN = 1


class Game:
    """One human against the AI."""

    def __init__(self, size: int = 15) -> None:
        self.board = Board(size)
        self.ai = AIPlayer(2)
        self.winner = 0

    def play(self, row: int, col: int) -> bool:
        if self.winner or not self.board.place(row, col, HUMAN):
            return False
        if self.board.wins(row, col):
            self.winner = HUMAN
        return True

    def ai_turn(self) -> tuple:
        if self.winner or self.board.is_full():
            return None
        row, col = self.ai.choose_move(self.board)
        self.board.place(row, col, self.ai.stone)
        if self.board.wins(row, col):
            self.winner = self.ai.stone
        return (row, col)
'''

MAIN = '''\
from core.game import Game


def main() -> None:
    game = Game()
    while not game.winner:
        raw = input("row col> ").split()
        if len(raw) != 2 or not game.play(int(raw[0]), int(raw[1])):
            print("illegal move")
            continue
        print("AI plays", game.ai_turn())
    print("winner:", "you" if game.winner == 1 else "AI")


if __name__ == "__main__":
    main()
'''

GOMOKU_FILES = {"core/board.py": BOARD, "ai/engine.py": ENGINE, "core/game.py": GAME, "main.py": MAIN}


def gomoku():
    gen = response(
        "Four modules: board rules, an AI, the game loop and a console entry point.",
        "Drafted the contract.",
        actions=[
            add("Project Overview", "A console Gomoku game where one human plays five-in-a-row against a computer opponent."),
            add("User Stories (Features)", "- As a player I place a stone and the AI answers.\n- As a player I am told when five in a row ends the game."),
            add("Constraints", "- Python 3 standard library only.\n- Board is 15x15."),
            add("Directory Structure", "```\nmain.py\ncore/board.py\ncore/game.py\nai/engine.py\n```"),
            add("Global Shared Knowledge", "- Stones: 0 empty, 1 human (black), 2 AI (white).\n- Moves are (row, col) tuples."),
            add("Dependency Relationships", GOMOKU_DEPS),
            add("Symbolic API Specifications", GOMOKU_API),
        ],
    )
    disc = response(
        "The checker flags main.py: its only function has no description.",
        "Added the missing docstring.",
        actions=[update("Symbolic API Specifications", GOMOKU_API_FIXED)],
    )
    recs = [record(0, "generator", "contract", gen), record(0, "discriminator", "contract", disc)]
    for path, body in GOMOKU_FILES.items():
        recs.append(worker(1, path, body))
    for path in GOMOKU_FILES:
        recs.append(critic(2, path, "PASS"))
    return recs, GOMOKU_FILES


# ---------------------------------------------------------- plane battle

PLANE_API = """\
- **File:** `entities/player.py`
  - **Owner:** Backend Engineer
  - **Version:** 1
  - **Status:** TODO
  - **Class:** `Player`
    - **Attribute:** `x: int` - Horizontal position in pixels.
    - **Attribute:** `y: int` - Vertical position in pixels.
    - **Attribute:** `health: int` - Remaining hit points.
    - **Method:** `def move(dx: int, dy: int) -> None` - Shift the plane by a delta.
    - **Method:** `def take_hit(damage: int) -> None` - Lose health when struck.
- **File:** `core/collision.py`
  - **Owner:** Algorithm Engineer
  - **Version:** 1
  - **Status:** TODO
  - **Function:** `def hits(player: Player, bx: int, by: int) -> bool` - True when a bullet at (bx, by) strikes the player.
- **File:** `main.py`
  - **Owner:** Frontend Engineer
  - **Version:** 1
  - **Status:** TODO
  - **Function:** `def main() -> None` - Run one scripted round and print the player state."""

PLANE_DEPS = """\
core/collision.py --> entities/player.py
main.py --> core/collision.py
main.py --> entities/player.py"""

PLAYER_V1 = '''\
class Player:
    """The plane the user steers."""

    def __init__(self, x: int, y: int) -> None:
        self.x = x
        self.y = y
        self.health = 100

    def move(self, dx: int, dy: int) -> None:
        self.x += dx
        self.y += dy

    def take_hit(self, damage: int) -> None:
        self.health = max(0, self.health - damage)
'''

PLAYER_V2 = '''\
class Player:
    """The plane the user steers."""

    def __init__(self, x: int, y: int) -> None:
        self.x = x
        self.y = y
        self.health = 100
        self.width = 40
        self.height = 32

    def move(self, dx: int, dy: int) -> None:
        self.x += dx
        self.y += dy

    def take_hit(self, damage: int) -> None:
        self.health = max(0, self.health - damage)
'''

COLLISION = '''\
from entities.player import Player


def hits(player: Player, bx: int, by: int) -> bool:
    inside_x = player.x <= bx < player.x + player.width
    inside_y = player.y <= by < player.y + player.height
    return inside_x and inside_y
'''

PLANE_MAIN = '''\
from core.collision import hits
from entities.player import Player


def main() -> None:
    player = Player(100, 500)
    player.move(5, 0)
    if hits(player, 110, 510):
        player.take_hit(10)
    print(player.x, player.y, player.health)


if __name__ == "__main__":
    main()
'''

DIRECTIVE = "Fix the schema definition; Player requires spatial dimensions (width, height) used by core/collision.py."


def plane_battle():
    gen = response(
        "A plane entity, a collision helper and an entry point.",
        "Drafted the contract.",
        actions=[
            add("Project Overview", "A small flying battle game: the player's plane moves in four directions and is damaged by enemy bullets."),
            add("User Stories (Features)", "- As a player I move the plane up, down, left and right.\n- As a player I lose health when a bullet hits my plane."),
            add("Constraints", "- Python 3 standard library only."),
            add("Directory Structure", "```\nmain.py\ncore/collision.py\nentities/player.py\n```"),
            add("Global Shared Knowledge", "- Screen coordinates in pixels, origin top left."),
            add("Dependency Relationships", PLANE_DEPS),
            add("Symbolic API Specifications", PLANE_API),
        ],
    )
    disc = response("Nothing to rectify.", "The draft is consistent.")
    recs = [
        record(0, "generator", "contract", gen),
        record(0, "discriminator", "contract", disc),
        worker(1, "core/collision.py", COLLISION, "Collision uses the plane's bounding box."),
        worker(1, "entities/player.py", PLAYER_V1),
        worker(1, "main.py", PLANE_MAIN),
        critic(2, "core/collision.py", "PASS"),
        critic(2, "entities/player.py", f"FAIL {DIRECTIVE}"),
        critic(2, "main.py", "PASS"),
        worker(3, "entities/player.py", PLAYER_V2, "Added width and height to Player."),
        critic(4, "entities/player.py", "PASS"),
    ]
    files = {"core/collision.py": COLLISION, "entities/player.py": PLAYER_V2, "main.py": PLANE_MAIN}
    return recs, files


def write(name, recs):
    with open(HERE / name, "w", encoding="utf-8") as f:
        for r in recs:
            f.write(json.dumps(r, sort_keys=True) + "\n")


def main():
    fixtures = {"gomoku.jsonl": gomoku(), "plane_battle.jsonl": plane_battle()}
    if "--golden" in sys.argv:
        for name, (_, files) in fixtures.items():
            for path, body in sorted(files.items()):
                print(name, path, hashlib.sha256(body.encode()).hexdigest())
        return
    for name, (recs, _) in fixtures.items():
        write(name, recs)


if __name__ == "__main__":
    main()
