"""예외 정의 모듈.

CLI 종료 코드와 1:1로 대응됩니다 (FormatError → 3, InvalidArgumentError → 4).
"""

from __future__ import annotations


class TokenmarkError(Exception):
    """tokenmark 공통 예외."""


class InvalidArgumentError(TokenmarkError, ValueError):
    """인자 값이 허용 범위를 벗어났거나 서로 호환되지 않습니다."""


class InvalidStateError(TokenmarkError, RuntimeError):
    """연산을 수행할 수 없는 상태입니다 (예: 모든 로짓이 -inf)."""


class FormatError(TokenmarkError, ValueError):
    """바이너리/이미지 파일 형식 오류. 문제가 발견된 바이트 오프셋을 함께 보고합니다."""

    def __init__(self, message: str, offset: int = 0) -> None:
        super().__init__(f"{message} (offset={offset})")
        self.offset = offset
