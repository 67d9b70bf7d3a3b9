#include "unity.h"
#include "header.h"
#include "helpers.h"

void setUp(void) {}
void tearDown(void) {}

void test_stack_peek_path0_empty_stack(void)
{
    struct stack *s = stack_from_values(NULL, 0);
    int v = 42;
    TEST_ASSERT_EQUAL_INT(-1, stack_peek(s, &v));
    TEST_ASSERT_EQUAL_INT(42, v);
    stack_destroy(s);
}
