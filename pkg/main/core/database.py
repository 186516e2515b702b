from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker, declarative_base, Session
from main.config import DATABASE_URL


def make_engine(url: str):
    connect_args = {"check_same_thread": False} if url.startswith("sqlite") else {}
    return create_engine(url, connect_args=connect_args)


engine = make_engine(DATABASE_URL)
SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)

Base = declarative_base()


def make_session(url: str) -> Session:
    """Session on a store other than the default one; creates missing tables."""
    other = make_engine(url)
    Base.metadata.create_all(other)
    return sessionmaker(autocommit=False, autoflush=False, bind=other)()
